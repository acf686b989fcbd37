#pragma once

#include <vector>

#include "sar/attention.hpp"
#include "sar/model.hpp"
#include "sar/nn_ops.hpp"

namespace sar {

template <class S>
struct DecoderState {
  Tensor<S> h1, c1, h2, c2;  // each [dh]
};

template <class S>
DecoderState<S> zero_decoder_state(int dh) {
  return {Tensor<S>::zeros({dh}), Tensor<S>::zeros({dh}), Tensor<S>::zeros({dh}),
          Tensor<S>::zeros({dh})};
}

namespace detail {

template <class S>
DecoderState<S> lstm2_advance(ParamStore<S>& store, const std::string& prefix,
                              const Tensor<S>& x, const DecoderState<S>& s) {
  auto s1 = lstm_step(x, s.h1, s.c1, store.get(prefix + ".l1.w_ih"),
                      store.get(prefix + ".l1.w_hh"), store.get(prefix + ".l1.bias"));
  DecoderState<S> out;
  out.h1 = row(s1, 0);
  out.c1 = row(s1, 1);
  auto s2 = lstm_step(out.h1, s.h2, s.c2, store.get(prefix + ".l2.w_ih"),
                      store.get(prefix + ".l2.w_hh"), store.get(prefix + ".l2.bias"));
  out.h2 = row(s2, 0);
  out.c2 = row(s2, 1);
  return out;
}

}  // namespace detail

// Summarizes the feature map into one vector: max-pool each valid column
// over height, run the 2-layer LSTM left to right, return the top hidden
// state at the last valid column. Padding columns are never touched.
template <class S>
Tensor<S> encode(ParamStore<S>& store, const ModelConfig& cfg, const FeatureMap<S>& fm) {
  if (fm.valid_width < 1 || fm.valid_width > fm.values.dim(2))
    throw std::runtime_error("encode: empty or out-of-range valid region");
  auto pooled = height_max_wc(fm.values);  // [W', D]
  auto state = zero_decoder_state<S>(cfg.hidden_dim);
  for (int t = 0; t < fm.valid_width; ++t)
    state = detail::lstm2_advance(store, "encoder", row(pooled, t), state);
  return state.h2;
}

// Step 0 of decoding: the holistic feature, adapted to the decoder input
// width, conditions the state. Nothing is emitted.
template <class S>
DecoderState<S> decode_start(ParamStore<S>& store, const ModelConfig& cfg,
                             const Tensor<S>& holistic) {
  auto x = linear(holistic, store.get("decoder.holistic.weight"),
                  store.get("decoder.holistic.bias"));
  return detail::lstm2_advance(store, "decoder", x, zero_decoder_state<S>(cfg.hidden_dim));
}

template <class S>
struct DecodeStep {
  Tensor<S> logits;  // [num_classes]
  Tensor<S> probs;   // softmax(logits)
  DecoderState<S> state;
  Tensor<S> alpha;   // attention map of this step
};

// One emitting step: embed the token, advance the LSTM, attend with the new
// top hidden state, classify [h'; g].
template <class S>
DecodeStep<S> decode_step(ParamStore<S>& store, const ModelConfig& cfg,
                          const AttnContext<S>& ctx, int token,
                          const DecoderState<S>& state) {
  const auto& table = store.get("decoder.embed.weight");
  if (token < 0 || token >= table.dim(0))
    throw std::runtime_error("decode_step: token " + std::to_string(token) +
                             " out of vocabulary");
  auto x = embed_row(table, token);
  DecodeStep<S> out;
  out.state = detail::lstm2_advance(store, "decoder", x, state);
  auto att = attend(store, cfg.attention(), ctx, out.state.h2);
  out.alpha = att.alpha;
  out.logits = linear(concat(out.state.h2, att.glimpse), store.get("decoder.out.weight"),
                      store.get("decoder.out.bias"));
  out.probs = softmax_row(out.logits);
  return out;
}

// Teacher-forced mean cross-entropy over one sample. target must be the
// label token ids terminated by END; trailing PAD entries are ignored.
template <class S>
Tensor<S> sequence_loss(ParamStore<S>& store, const ModelConfig& cfg,
                        const FeatureMap<S>& fm, const std::vector<int>& target,
                        const CharSet& cs) {
  if (target.empty()) throw std::runtime_error("sequence_loss: empty target");
  auto holistic = encode(store, cfg, fm);
  auto ctx = attn_context(store, cfg.attention(), fm);
  auto state = decode_start(store, cfg, holistic);

  std::vector<Tensor<S>> losses;
  int prev = cs.start_token();
  for (int y : target) {
    if (y == cs.pad_token()) break;
    if (y < 0 || y >= cs.num_classes())
      throw std::runtime_error("sequence_loss: target id " + std::to_string(y) +
                               " out of range");
    auto step = decode_step(store, cfg, ctx, prev, state);
    losses.push_back(softmax_cross_entropy(step.logits, y));
    state = step.state;
    prev = y;
    if (y == cs.end_token()) break;
  }
  if (losses.empty()) throw std::runtime_error("sequence_loss: target is all padding");
  if (target[losses.size() - 1] != cs.end_token())
    throw std::runtime_error("sequence_loss: target must be terminated by END");
  return mean_of(losses);
}

}  // namespace sar
