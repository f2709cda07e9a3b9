#pragma once

#include <string>
#include <vector>

#include "stull/index.hpp"

namespace stull {

struct InvariantReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

/// Structural checks over one bin: routing, segment balance, buffer provenance
/// and proportionality.
void check_bin(const StullIndex& index, const TemporalBin& bin, InvariantReport& report);

/// All bins plus index-wide id uniqueness.
InvariantReport check_invariants(const StullIndex& index);

}  // namespace stull
