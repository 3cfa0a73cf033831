#pragma once

namespace fundusqa {

// Worker cap for the data-parallel kernels. FUNDUS_QA_THREADS limits the
// pool, 0 or unset means the OpenMP default. Kernel results never depend on
// the value: parallel loops write disjoint outputs and every floating-point
// reduction is ordered deterministically before accumulation.
int worker_count();

}  // namespace fundusqa
