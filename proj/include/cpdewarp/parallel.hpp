#pragma once

namespace cpd {

/// Dense kernels have a serial reference and an OpenMP implementation that
/// must produce bit-identical results.
enum class Execution { Serial, Parallel };

/// Sets the OpenMP thread count used by Execution::Parallel kernels.
/// n <= 0 restores the runtime default.
void set_thread_count(int n);
int thread_count();

}  // namespace cpd
