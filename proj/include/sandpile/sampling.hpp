#pragma once

#include "sandpile/core.hpp"
#include "sandpile/rng.hpp"
#include "sandpile/spanning_trees.hpp"

namespace sandpile {

/// Exact uniform sample from R_V: a Wilson spanning tree of the wired graph
/// pushed through the tree-to-configuration bijection.
inline Configuration sample_recurrent(const VolumePtr& vol, Rng& rng) { return tree_to_config(wilson_ust(vol, rng)); }

/// Uniform sample from R_{V \ {0}} for a punctured volume, via the
/// two-component forest and the two-phase correspondence.
inline Configuration sample_recurrent_punctured(const VolumePtr& punctured, Rng& rng) {
  return tree_to_config(wilson_two_component(punctured, rng));
}

}  // namespace sandpile
