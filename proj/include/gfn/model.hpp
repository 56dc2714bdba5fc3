#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gfn/dag.hpp"
#include "gfn/rng.hpp"

namespace gfn {

// Which heads a model exposes. Forward logits are indexed by forward action
// id (flow-matching reads them as log edge flows instead of policy logits);
// backward logits by backward action id. Scalar heads follow the logit
// blocks.
struct HeadLayout {
  std::int32_t fwd = 0;
  std::int32_t bwd = 0;  // 0 when the backward policy is uniform
  bool state_flow = false;
  bool fl = false;
  bool total_flow = false;

  std::int32_t per_state() const {
    return fwd + bwd + (state_flow ? 1 : 0) + (fl ? 1 : 0);
  }
  std::int32_t state_flow_offset() const { return fwd + bwd; }
  std::int32_t fl_offset() const { return fwd + bwd + (state_flow ? 1 : 0); }
};

class Model {
 public:
  virtual ~Model() = default;

  const HeadLayout& layout() const { return layout_; }
  std::int32_t num_params() const { return static_cast<std::int32_t>(params_.size()); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  void zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

  // group split for the optimizer: [0, z_group_offset) at the base rate,
  // [z_group_offset, n) at the total-flow rate
  std::int32_t z_group_offset() const {
    return z_index_ < 0 ? num_params() : z_index_;
  }
  bool has_total_flow() const { return z_index_ >= 0; }
  double log_total_flow() const { return params_[z_index_]; }
  void set_log_total_flow(double v) { params_[z_index_] = v; }
  void add_log_total_flow_grad(double up) { grads_[z_index_] += up; }

  // raw head outputs for one state, layout.per_state() wide
  virtual void eval_state(StateId s, std::span<double> out,
                          std::vector<double>& scratch) const = 0;
  // accumulate d(loss)/d(out) into parameter gradients; scratch is the one
  // filled by the matching eval_state call
  virtual void backprop_state(StateId s, std::span<const double> dout,
                              const std::vector<double>& scratch) = 0;
  virtual std::string kind() const = 0;

  // checkpoint tensors: (name, shape) pairs over contiguous param slices
  struct TensorInfo {
    std::string name;
    std::vector<std::int64_t> shape;
    std::int64_t offset;
    std::int64_t size;
  };
  virtual std::vector<TensorInfo> tensors() const = 0;

 protected:
  HeadLayout layout_;
  std::vector<double> params_, grads_;
  std::int32_t z_index_ = -1;
};

// One logit per (state, action) plus the scalar heads per state, stored as a
// dense block per state. Used wherever exactness matters.
class TabularModel : public Model {
 public:
  TabularModel(std::int32_t num_states, const HeadLayout& layout);

  void init_uniform(Rng& rng, double half_width);

  double head(StateId s, std::int32_t index) const {
    return params_[block_ * s + index];
  }
  void set_head(StateId s, std::int32_t index, double v) { params_[block_ * s + index] = v; }

  // which side of the correspondence a parameter index belongs to
  bool is_forward_param(std::int32_t index) const;
  bool is_backward_param(std::int32_t index) const;

  void eval_state(StateId s, std::span<double> out, std::vector<double>& scratch) const override;
  void backprop_state(StateId s, std::span<const double> dout,
                      const std::vector<double>& scratch) override;
  std::string kind() const override { return "tabular"; }
  std::vector<TensorInfo> tensors() const override;

 private:
  std::int32_t num_states_;
  std::int32_t block_;
};

using Encoder = std::function<void(StateId, std::span<double>)>;

struct MlpSpec {
  std::int32_t input_dim = 0;
  std::int32_t hidden_layers = 2;
  std::int32_t hidden_width = 64;
  double leaky_slope = 0.01;
};

// Plain MLP trunk with leaky-rectifier activations; the output vector is the
// per-state head block. Weights start uniform in [-1/sqrt(fan_in),
// 1/sqrt(fan_in)], the total-flow scalar at 0.
class MlpModel : public Model {
 public:
  MlpModel(const MlpSpec& spec, const HeadLayout& layout, Encoder encoder, Rng& rng);

  const MlpSpec& spec() const { return spec_; }

  void eval_state(StateId s, std::span<double> out, std::vector<double>& scratch) const override;
  void backprop_state(StateId s, std::span<const double> dout,
                      const std::vector<double>& scratch) override;
  std::string kind() const override { return "mlp"; }
  std::vector<TensorInfo> tensors() const override;

 private:
  struct Layer {
    std::int64_t w_off, b_off;
    std::int32_t rows, cols;
  };
  MlpSpec spec_;
  Encoder encoder_;
  std::vector<Layer> layers_;
  // scratch layout: [x][z0][a0][z1][a1]...[zL-1][aL-1]
  std::int64_t scratch_size_;
};

// Per-batch cache of head evaluations plus the reverse pass. Values are
// cached per touched state; gradient accumulation records per-state output
// gradients which backward() pushes through the model once per state.
// Invalidate with reset() after every parameter update.
class EvalContext {
 public:
  EvalContext(Model& model, const FlowDag& dag);

  Model& model() { return model_; }
  const FlowDag& dag() const { return dag_; }

  void reset();

  // log P_F(children | s) over child slots (masked log-softmax)
  std::span<const double> log_forward(StateId s);
  // linear probabilities per child slot
  std::span<const double> forward_probs(StateId s);
  // log P_B(parents | s) over parent slots; requires a backward head
  std::span<const double> log_backward(StateId s);
  double log_backward_uniform(StateId s) const;  // -log indegree

  double raw_head(StateId s, std::int32_t index);
  double log_state_flow(StateId s);
  double log_fl(StateId s);
  double log_total_flow() const;

  void add_d_log_forward(StateId s, std::int32_t child_slot, double up);
  void add_d_log_backward(StateId s, std::int32_t parent_slot, double up);
  void add_d_raw(StateId s, std::int32_t index, double up);
  void add_d_log_total_flow(double up);

  // push recorded output gradients into model parameter gradients (in touch
  // order); throws graph_not_recorded when nothing was recorded
  void backward();
  bool has_recorded() const { return recorded_; }

 private:
  struct Entry {
    std::vector<double> out;
    std::vector<double> scratch;
    std::vector<double> log_pf, pf;
    std::vector<double> log_pb;
    std::vector<double> dout;
  };

  Entry& touch(StateId s);
  void ensure_forward(StateId s, Entry& e);
  void ensure_backward(StateId s, Entry& e);
  std::vector<double>& dout(StateId s, Entry& e);

  Model& model_;
  const FlowDag& dag_;
  std::vector<std::int32_t> slot_;  // state -> entry index or -1
  std::deque<Entry> entries_;       // deque: spans into entries stay valid
  std::vector<StateId> touched_;
  bool recorded_ = false;
};

// Masked softmax over the valid children of s; errors on the sink.
std::vector<double> forward_policy(Model& model, const FlowDag& dag, StateId s);

// Full per-state child-slot probability table (the exact-DP input).
PolicyTable policy_table(Model& model, const FlowDag& dag);

struct AdamState {
  std::vector<double> first_moment, second_moment;
  std::int64_t step_count = 0;
  double lr = 1e-3;
  double z_lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

  explicit AdamState(const Model& model, double lr_, double z_lr_);
  // standard bias-corrected update; params in [z_group_offset, n) use z_lr
  void step(Model& model);
};

// optional global-norm clip; returns the pre-clip norm
double clip_grad_norm(Model& model, double max_norm);

void save_checkpoint(const std::string& path, const Model& model, std::uint64_t config_hash);
// refuses (checkpoint_mismatch) on config-hash or shape mismatch
void load_checkpoint(const std::string& path, Model& model, std::uint64_t config_hash);

}  // namespace gfn
