// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmdiff/check/gradcheck.hpp"

namespace ssmdiff::check {

struct SuiteEntry {
  std::string name;  // "op.<name>", "block.<name>" or "model.masked_loss"
  GradCheckResult result;
};

/// Finite-difference checks of every primitive op, the selective scan, the
/// uni/bi Mamba blocks, message passing, virtual-node attention, the
/// conditioning module, one noise-estimation block and the end-to-end masked
/// loss of a 2-node, L = 8, d = 4 model.
std::vector<SuiteEntry> run_gradient_suite(std::uint64_t seed = 1);

double max_error(const std::vector<SuiteEntry>& entries);

}  // namespace ssmdiff::check
