#pragma once

#include <vector>

#include "decouple.hpp"
#include "tape.hpp"

namespace scnn {

// Two causal-convolution branches combined multiplicatively. w1/w2 are
// [kernel, channels, 12*channels] (one input-projection per tap), b1/b2
// [channels] or null when biases are disabled.
struct FusionParams {
  NodePtr w1, w2;
  NodePtr b1, b2;
  int kernel = 2;
};

// S_t = (sum_j w1_j.[Z_{t-j},H_{t-j}] + b1) * (sum_j w2_j.[...] + b2).
// Taps before the series start contribute nothing (zero-filled shift),
// matching the windowed-statistics warm-up policy.
NodePtr fuse(const NodePtr& z, const NodePtr& h, const FusionParams& params);

struct BlockParams {
  NodePtr attn_logits;  // [n_vars, n_vars]
  FusionParams fusion;
};

struct StackOut {
  // All blocks in order; .back() is the block whose components and residuals
  // feed extrapolation.
  std::vector<DecoupleOut> blocks;
  // Fused state per block; states[l] is block l+1's input.
  std::vector<NodePtr> states;
};

// Chains decouple_block + fuse: block l consumes states[l-1] (block 0 the
// embedded input). Every block runs fusion so the chain is uniform; the last
// state is exposed for inspection but nothing downstream consumes it.
StackOut stack_blocks(const NodePtr& embedded, const std::vector<BlockParams>& blocks,
                      const DecoupleConfig& cfg);

}  // namespace scnn
