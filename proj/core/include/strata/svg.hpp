#pragma once

#include <string>

#include "strata/folded.hpp"

namespace strata {

struct SvgOptions {
    int width = 1200;
    int row_height = 16;
    double min_fraction = 0.001;  // rectangles narrower than this are elided
    std::string title = "flame graph";
};

/// Deterministic stacked-rectangle flame graph (root row at the bottom).
/// Colors derive from a hash of the frame name, so identical inputs render
/// byte-identically.
std::string render_flamegraph(const FoldedProfile& profile,
                              const SvgOptions& options = {});

/// Two-tone differential rendering over the union of both profiles:
/// growth relative to `before` shades red, shrinkage shades blue; widths
/// follow the `after` profile (plus `before`-only stacks at zero width
/// elided). Neutral stacks render grey.
std::string render_diff_flamegraph(const FoldedProfile& before,
                                   const FoldedProfile& after,
                                   const SvgOptions& options = {});

}  // namespace strata
