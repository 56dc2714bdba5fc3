#include "gfn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "gfn/error.hpp"
#include "gfn/kernels.hpp"

namespace gfn {

// ---------------------------------------------------------------------------
// TabularModel

TabularModel::TabularModel(std::int32_t num_states, const HeadLayout& layout)
    : num_states_(num_states), block_(layout.per_state()) {
  layout_ = layout;
  const std::int64_t n = static_cast<std::int64_t>(num_states_) * block_;
  params_.assign(n + (layout.total_flow ? 1 : 0), 0.0);
  grads_.assign(params_.size(), 0.0);
  if (layout.total_flow) z_index_ = static_cast<std::int32_t>(n);
}

void TabularModel::init_uniform(Rng& rng, double half_width) {
  for (auto& p : params_) p = rng.uniform(-half_width, half_width);
  if (z_index_ >= 0) params_[z_index_] = 0.0;
}

bool TabularModel::is_forward_param(std::int32_t index) const {
  if (index == z_index_) return true;
  const std::int32_t within = index % block_;
  return within < layout_.fwd;
}

bool TabularModel::is_backward_param(std::int32_t index) const {
  if (index == z_index_) return false;
  const std::int32_t within = index % block_;
  return within >= layout_.fwd && within < layout_.fwd + layout_.bwd;
}

void TabularModel::eval_state(StateId s, std::span<double> out, std::vector<double>&) const {
  const double* block = params_.data() + static_cast<std::int64_t>(block_) * s;
  std::copy(block, block + block_, out.begin());
}

void TabularModel::backprop_state(StateId s, std::span<const double> dout,
                                  const std::vector<double>&) {
  double* block = grads_.data() + static_cast<std::int64_t>(block_) * s;
  for (std::int32_t i = 0; i < block_; ++i) block[i] += dout[i];
}

std::vector<Model::TensorInfo> TabularModel::tensors() const {
  std::vector<TensorInfo> out;
  out.push_back({"table", {num_states_, block_}, 0, static_cast<std::int64_t>(num_states_) * block_});
  if (z_index_ >= 0) out.push_back({"log_z", {1}, z_index_, 1});
  return out;
}

// ---------------------------------------------------------------------------
// MlpModel

MlpModel::MlpModel(const MlpSpec& spec, const HeadLayout& layout, Encoder encoder, Rng& rng)
    : spec_(spec), encoder_(std::move(encoder)) {
  layout_ = layout;
  const std::int32_t out_dim = layout.per_state();
  std::int64_t off = 0;
  std::int32_t in = spec.input_dim;
  for (std::int32_t l = 0; l < spec.hidden_layers; ++l) {
    layers_.push_back({off, off + static_cast<std::int64_t>(spec.hidden_width) * in,
                       spec.hidden_width, in});
    off += static_cast<std::int64_t>(spec.hidden_width) * in + spec.hidden_width;
    in = spec.hidden_width;
  }
  layers_.push_back({off, off + static_cast<std::int64_t>(out_dim) * in, out_dim, in});
  off += static_cast<std::int64_t>(out_dim) * in + out_dim;

  params_.assign(off + (layout.total_flow ? 1 : 0), 0.0);
  grads_.assign(params_.size(), 0.0);
  if (layout.total_flow) z_index_ = static_cast<std::int32_t>(off);

  for (const auto& layer : layers_) {
    const double hw = 1.0 / std::sqrt(static_cast<double>(layer.cols));
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(layer.rows) * layer.cols; ++i)
      params_[layer.w_off + i] = rng.uniform(-hw, hw);
    for (std::int32_t i = 0; i < layer.rows; ++i) params_[layer.b_off + i] = rng.uniform(-hw, hw);
  }

  scratch_size_ = spec.input_dim;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) scratch_size_ += 2 * layers_[l].rows;
}

void MlpModel::eval_state(StateId s, std::span<double> out, std::vector<double>& scratch) const {
  const auto& ops = kernels::active();
  scratch.assign(scratch_size_, 0.0);
  double* x = scratch.data();
  encoder_(s, {x, static_cast<std::size_t>(spec_.input_dim)});

  const double* in = x;
  std::int64_t pos = spec_.input_dim;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    double* z = scratch.data() + pos;
    double* a = z + layer.rows;
    ops.matvec(z, params_.data() + layer.w_off, in, params_.data() + layer.b_off, layer.rows,
               layer.cols);
    ops.leaky_relu(a, z, layer.rows, spec_.leaky_slope);
    in = a;
    pos += 2 * layer.rows;
  }
  const auto& head = layers_.back();
  ops.matvec(out.data(), params_.data() + head.w_off, in, params_.data() + head.b_off, head.rows,
             head.cols);
}

void MlpModel::backprop_state(StateId, std::span<const double> dout,
                              const std::vector<double>& scratch) {
  const auto& ops = kernels::active();
  // activation pointers recovered from the eval scratch
  std::vector<const double*> acts;  // input of each layer
  acts.push_back(scratch.data());
  std::int64_t pos = spec_.input_dim;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    acts.push_back(scratch.data() + pos + layers_[l].rows);  // a_l
    pos += 2 * layers_[l].rows;
  }

  std::vector<double> delta(dout.begin(), dout.end());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const double* in = acts[l];
    ops.rank1_acc(grads_.data() + layer.w_off, delta.data(), in, layer.rows, layer.cols);
    for (std::int32_t r = 0; r < layer.rows; ++r) grads_[layer.b_off + r] += delta[r];
    if (l == 0) break;
    std::vector<double> din(layer.cols, 0.0);
    ops.matvec_t_acc(din.data(), params_.data() + layer.w_off, delta.data(), layer.rows,
                     layer.cols);
    // z of the previous layer sits right before its activation
    const double* z_prev = acts[l] - layers_[l - 1].rows;
    delta.resize(layer.cols);
    ops.leaky_relu_grad(delta.data(), din.data(), z_prev, layer.cols, spec_.leaky_slope);
  }
}

std::vector<Model::TensorInfo> MlpModel::tensors() const {
  std::vector<TensorInfo> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    out.push_back({"w" + std::to_string(l), {layer.rows, layer.cols}, layer.w_off,
                   static_cast<std::int64_t>(layer.rows) * layer.cols});
    out.push_back({"b" + std::to_string(l), {layer.rows}, layer.b_off, layer.rows});
  }
  if (z_index_ >= 0) out.push_back({"log_z", {1}, z_index_, 1});
  return out;
}

// ---------------------------------------------------------------------------
// EvalContext

EvalContext::EvalContext(Model& model, const FlowDag& dag)
    : model_(model), dag_(dag), slot_(dag.num_states(), -1) {}

void EvalContext::reset() {
  for (StateId s : touched_) slot_[s] = -1;
  touched_.clear();
  entries_.clear();
  recorded_ = false;
}

EvalContext::Entry& EvalContext::touch(StateId s) {
  std::int32_t idx = slot_[s];
  if (idx >= 0) return entries_[idx];
  slot_[s] = static_cast<std::int32_t>(entries_.size());
  touched_.push_back(s);
  entries_.emplace_back();
  Entry& e = entries_.back();
  e.out.resize(model_.layout().per_state());
  model_.eval_state(s, e.out, e.scratch);
  return entries_.back();
}

void EvalContext::ensure_forward(StateId s, Entry& e) {
  if (!e.log_pf.empty()) return;
  if (s == dag_.sink()) fail(errc::sink_has_no_children, "sink has no forward policy");
  const auto actions = dag_.child_actions(s);
  const std::size_t n = actions.size();
  e.log_pf.resize(n);
  e.pf.resize(n);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) m = std::max(m, e.out[actions[k]]);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) sum += std::exp(e.out[actions[k]] - m);
  const double lse = m + std::log(sum);
  for (std::size_t k = 0; k < n; ++k) {
    e.log_pf[k] = e.out[actions[k]] - lse;
    e.pf[k] = std::exp(e.log_pf[k]);
  }
}

void EvalContext::ensure_backward(StateId s, Entry& e) {
  if (!e.log_pb.empty()) return;
  if (model_.layout().bwd == 0)
    fail(errc::missing_model_head, "model has no backward-policy head");
  const auto actions = dag_.parent_actions(s);
  const std::size_t n = actions.size();
  const std::int32_t off = model_.layout().fwd;
  e.log_pb.resize(n);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) m = std::max(m, e.out[off + actions[k]]);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) sum += std::exp(e.out[off + actions[k]] - m);
  const double lse = m + std::log(sum);
  for (std::size_t k = 0; k < n; ++k) e.log_pb[k] = e.out[off + actions[k]] - lse;
}

std::span<const double> EvalContext::log_forward(StateId s) {
  Entry& e = touch(s);
  ensure_forward(s, e);
  return e.log_pf;
}

std::span<const double> EvalContext::forward_probs(StateId s) {
  Entry& e = touch(s);
  ensure_forward(s, e);
  return e.pf;
}

std::span<const double> EvalContext::log_backward(StateId s) {
  Entry& e = touch(s);
  ensure_backward(s, e);
  return e.log_pb;
}

double EvalContext::log_backward_uniform(StateId s) const {
  const auto parents = dag_.parents(s);
  return -std::log(static_cast<double>(parents.size()));
}

double EvalContext::raw_head(StateId s, std::int32_t index) { return touch(s).out[index]; }

double EvalContext::log_state_flow(StateId s) {
  if (!model_.layout().state_flow) fail(errc::missing_model_head, "model has no state-flow head");
  return touch(s).out[model_.layout().state_flow_offset()];
}

double EvalContext::log_fl(StateId s) {
  if (!model_.layout().fl) fail(errc::missing_model_head, "model has no forward-looking head");
  return touch(s).out[model_.layout().fl_offset()];
}

double EvalContext::log_total_flow() const {
  if (!model_.has_total_flow()) fail(errc::missing_model_head, "model has no total-flow head");
  return model_.log_total_flow();
}

std::vector<double>& EvalContext::dout(StateId, Entry& e) {
  if (e.dout.empty()) e.dout.assign(model_.layout().per_state(), 0.0);
  recorded_ = true;
  return e.dout;
}

void EvalContext::add_d_log_forward(StateId s, std::int32_t child_slot, double up) {
  if (up == 0.0) return;
  Entry& e = touch(s);
  ensure_forward(s, e);
  auto& d = dout(s, e);
  const auto actions = dag_.child_actions(s);
  d[actions[child_slot]] += up;
  for (std::size_t k = 0; k < actions.size(); ++k) d[actions[k]] -= up * e.pf[k];
}

void EvalContext::add_d_log_backward(StateId s, std::int32_t parent_slot, double up) {
  if (up == 0.0) return;
  Entry& e = touch(s);
  ensure_backward(s, e);
  auto& d = dout(s, e);
  const auto actions = dag_.parent_actions(s);
  const std::int32_t off = model_.layout().fwd;
  d[off + actions[parent_slot]] += up;
  for (std::size_t k = 0; k < actions.size(); ++k)
    d[off + actions[k]] -= up * std::exp(e.log_pb[k]);
}

void EvalContext::add_d_raw(StateId s, std::int32_t index, double up) {
  if (up == 0.0) return;
  Entry& e = touch(s);
  dout(s, e)[index] += up;
}

void EvalContext::add_d_log_total_flow(double up) {
  if (up == 0.0) return;
  recorded_ = true;
  model_.add_log_total_flow_grad(up);
}

void EvalContext::backward() {
  if (!recorded_) fail(errc::graph_not_recorded, "no loss was recorded in this context");
  for (StateId s : touched_) {
    Entry& e = entries_[slot_[s]];
    if (e.dout.empty()) continue;
    model_.backprop_state(s, e.dout, e.scratch);
    std::fill(e.dout.begin(), e.dout.end(), 0.0);
  }
  recorded_ = false;
}

// ---------------------------------------------------------------------------

std::vector<double> forward_policy(Model& model, const FlowDag& dag, StateId s) {
  if (s == dag.sink()) fail(errc::sink_has_no_children, "sink has no forward policy");
  EvalContext ctx(model, dag);
  auto probs = ctx.forward_probs(s);
  return {probs.begin(), probs.end()};
}

PolicyTable policy_table(Model& model, const FlowDag& dag) {
  EvalContext ctx(model, dag);
  PolicyTable table(dag.num_states());
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.sink()) continue;
    auto probs = ctx.forward_probs(s);
    table[s].assign(probs.begin(), probs.end());
  }
  return table;
}

// ---------------------------------------------------------------------------
// Adam

AdamState::AdamState(const Model& model, double lr_, double z_lr_) : lr(lr_), z_lr(z_lr_) {
  first_moment.assign(model.num_params(), 0.0);
  second_moment.assign(model.num_params(), 0.0);
}

void AdamState::step(Model& model) {
  if (static_cast<std::int32_t>(first_moment.size()) != model.num_params())
    fail(errc::shape_mismatch, "adam state does not match parameter shape");
  ++step_count;
  const double bias1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bias2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  const auto& ops = kernels::active();
  auto p = model.params();
  auto g = model.grads();
  const std::size_t z_off = model.z_group_offset();
  kernels::AdamConfig cfg{lr, beta1, beta2, epsilon, bias1, bias2};
  ops.adam_step(p.data(), g.data(), first_moment.data(), second_moment.data(), z_off, cfg);
  if (z_off < p.size()) {
    cfg.lr = z_lr;
    ops.adam_step(p.data() + z_off, g.data() + z_off, first_moment.data() + z_off,
                  second_moment.data() + z_off, p.size() - z_off, cfg);
  }
}

double clip_grad_norm(Model& model, double max_norm) {
  auto g = model.grads();
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& v : g) v *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// checkpoints: magic, config hash, tensor list, raw little-endian doubles

namespace {
constexpr char kMagic[8] = {'G', 'F', 'N', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
bool get(std::ifstream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return bool(is);
}
}  // namespace

void save_checkpoint(const std::string& path, const Model& model, std::uint64_t config_hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(errc::checkpoint_mismatch, "cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof kMagic);
  put(os, config_hash);
  const auto tensors = model.tensors();
  put(os, static_cast<std::uint32_t>(tensors.size()));
  const auto params = model.params();
  for (const auto& t : tensors) {
    put(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put(os, static_cast<std::int64_t>(d));
    os.write(reinterpret_cast<const char*>(params.data() + t.offset),
             static_cast<std::streamsize>(t.size * sizeof(double)));
  }
}

void load_checkpoint(const std::string& path, Model& model, std::uint64_t config_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(errc::checkpoint_mismatch, "cannot open '" + path + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    fail(errc::checkpoint_mismatch, "bad checkpoint magic");
  std::uint64_t hash = 0;
  get(is, hash);
  if (hash != config_hash)
    fail(errc::checkpoint_mismatch, "checkpoint was written under a different config");
  std::uint32_t count = 0;
  get(is, count);
  const auto tensors = model.tensors();
  if (count != tensors.size()) fail(errc::checkpoint_mismatch, "tensor count mismatch");
  auto params = model.params();
  for (const auto& t : tensors) {
    std::uint32_t name_len = 0;
    get(is, name_len);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t ndims = 0;
    get(is, ndims);
    std::vector<std::int64_t> shape(ndims);
    for (auto& d : shape) get(is, d);
    if (name != t.name || shape != t.shape)
      fail(errc::checkpoint_mismatch, "tensor '" + name + "' does not match model layout");
    is.read(reinterpret_cast<char*>(params.data() + t.offset),
            static_cast<std::streamsize>(t.size * sizeof(double)));
    if (!is) fail(errc::checkpoint_mismatch, "truncated checkpoint");
  }
}

}  // namespace gfn
