// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// Index-parallel loops. Every kernel keeps a serial reference path; callers
// write results into per-index slots and reduce them in index order, so both
// paths give bit-identical output.

#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace mixmt {

enum class Exec { Serial, Parallel };

// Calls fn(i) for i in [0, n). Exceptions thrown by fn are rethrown on the
// calling thread (the one from the lowest index wins).
template <typename Fn>
void for_each_index(std::size_t n, Exec exec, Fn&& fn) {
  if (exec == Exec::Serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::size_t error_index = n;
  std::mutex mu;
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (static_cast<std::size_t>(i) < error_index) {
        error_index = static_cast<std::size_t>(i);
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace mixmt
