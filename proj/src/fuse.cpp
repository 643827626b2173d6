#include "fuse.hpp"

namespace scnn {

namespace {

// One branch: sum over taps of a per-tap projection of the lagged [Z,H] rows.
NodePtr conv_branch(const NodePtr& zh_flat, const NodePtr& zh, const NodePtr& w, const NodePtr& b,
                    int kernel) {
  const int n = zh->shape[0];
  const int t_len = zh->shape[1];
  const int width = zh->shape[2];
  NodePtr acc = linear(zh_flat, slice0(w, 0), nullptr);
  for (int j = 1; j < kernel; ++j) {
    const NodePtr lagged = reshape(shift_time(zh, j), {n * t_len, width});
    acc = add(acc, linear(lagged, slice0(w, j), nullptr));
  }
  if (b) acc = add(acc, b);
  return acc;
}

}  // namespace

NodePtr fuse(const NodePtr& z, const NodePtr& h, const FusionParams& params) {
  if (z->shape.size() != 3 || h->shape.size() != 3 || z->shape[0] != h->shape[0] ||
      z->shape[1] != h->shape[1]) {
    fail_data("fuse: expected aligned [n,t,4c] and [n,t,8c], got " + shape_str(z->shape) +
              " and " + shape_str(h->shape));
  }
  if (params.kernel < 1) fail_usage("fuse: kernel must be positive");
  if (params.kernel > z->shape[1]) {
    fail_data("fuse: kernel " + std::to_string(params.kernel) + " exceeds series length " +
              std::to_string(z->shape[1]));
  }
  const int width = params.w1->shape[2];
  if (z->shape[2] + h->shape[2] != width) {
    fail_data("fuse: combined width " + std::to_string(z->shape[2] + h->shape[2]) +
              " does not match parameter width " + std::to_string(width));
  }
  const int n = z->shape[0];
  const int t_len = z->shape[1];
  const int channels = params.w1->shape[1];
  const NodePtr zh = concat({z, h}, 2);
  const NodePtr zh_flat = reshape(zh, {n * t_len, width});
  const NodePtr left = conv_branch(zh_flat, zh, params.w1, params.b1, params.kernel);
  const NodePtr right = conv_branch(zh_flat, zh, params.w2, params.b2, params.kernel);
  return reshape(mul(left, right), {n, t_len, channels});
}

StackOut stack_blocks(const NodePtr& embedded, const std::vector<BlockParams>& blocks,
                      const DecoupleConfig& cfg) {
  if (blocks.empty()) fail_usage("stack_blocks: at least one block required");
  StackOut out;
  out.blocks.reserve(blocks.size());
  out.states.reserve(blocks.size());
  NodePtr state = embedded;
  for (const BlockParams& block : blocks) {
    DecoupleOut decoupled = decouple_block(state, block.attn_logits, cfg);
    state = fuse(decoupled.z, decoupled.h, block.fusion);
    out.blocks.push_back(std::move(decoupled));
    out.states.push_back(state);
  }
  return out;
}

}  // namespace scnn
