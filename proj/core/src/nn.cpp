#include "cfrg/nn.hpp"

#include <cmath>

namespace cfrg::nn {

Tensor& Module::register_parameter(const std::string& name, Tensor t) {
  t.set_requires_grad(true);
  params_.emplace_back(name, std::move(t));
  return params_.back().second;
}

Tensor& Module::register_buffer(const std::string& name, Tensor t) {
  t.set_requires_grad(false);
  buffers_.emplace_back(name, std::move(t));
  return buffers_.back().second;
}

void Module::register_module(const std::string& name, std::shared_ptr<Module> m) {
  children_.emplace_back(name, std::move(m));
}

std::vector<std::pair<std::string, Tensor>> Module::named_parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [n, t] : params_) out.emplace_back(prefix + n, t);
  for (const auto& [n, c] : children_) {
    auto sub = c->named_parameters(prefix + n + ".");
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> Module::named_buffers(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [n, t] : buffers_) out.emplace_back(prefix + n, t);
  for (const auto& [n, c] : children_) {
    auto sub = c->named_buffers(prefix + n + ".");
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& [n, t] : named_parameters()) out.push_back(t);
  return out;
}

void Module::set_training(bool training) {
  training_ = training;
  for (auto& [n, c] : children_) c->set_training(training);
}

void Module::zero_grad() {
  for (auto& [n, t] : named_parameters()) {
    Tensor tt = t;
    tt.zero_grad();
  }
}

void Module::freeze() {
  for (auto& [n, t] : named_parameters()) {
    Tensor tt = t;
    tt.set_requires_grad(false);
  }
}

int64_t Module::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

uint64_t Module::state_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, t] : named_parameters()) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(t.data().data(), t.data().size() * sizeof(real), h);
  }
  for (const auto& [name, t] : named_buffers()) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(t.data().data(), t.data().size() * sizeof(real), h);
  }
  return h;
}

Tensor kaiming_conv_weight(int c_out, int c_in_per_group, int kh, int kw, RngStream& rng) {
  const real fan_out = (real)c_out * kh * kw;
  const real stddev = std::sqrt(2.0 / fan_out);
  return Tensor::randn({c_out, c_in_per_group, kh, kw}, rng, stddev);
}

Conv2d::Conv2d(int c_in, int c_out, int kernel, int stride, int padding, RngStream& rng, bool bias,
               int groups)
    : stride_(stride), padding_(padding), groups_(groups) {
  weight_ = register_parameter("weight", kaiming_conv_weight(c_out, c_in / groups, kernel, kernel, rng));
  if (bias) bias_ = register_parameter("bias", Tensor::zeros({c_out}));
}

Tensor Conv2d::forward(const Tensor& x) const {
  return ops::conv2d(x, weight_, bias_, stride_, padding_, groups_);
}

ConvTranspose2d::ConvTranspose2d(int c_in, int c_out, int kernel, int stride, int padding,
                                 RngStream& rng, bool bias)
    : stride_(stride), padding_(padding) {
  // fan-out here is per input channel
  const real stddev = std::sqrt(2.0 / ((real)c_out * kernel * kernel));
  weight_ = register_parameter("weight", Tensor::randn({c_in, c_out, kernel, kernel}, rng, stddev));
  if (bias) bias_ = register_parameter("bias", Tensor::zeros({c_out}));
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
  return ops::conv_transpose2d(x, weight_, bias_, stride_, padding_);
}

BatchNorm2d::BatchNorm2d(int channels) {
  gamma_ = register_parameter("weight", Tensor::full({channels}, 1.0));
  beta_ = register_parameter("bias", Tensor::zeros({channels}));
  running_mean_ = register_buffer("running_mean", Tensor::zeros({channels}));
  running_var_ = register_buffer("running_var", Tensor::full({channels}, 1.0));
}

Tensor BatchNorm2d::forward(const Tensor& x) const {
  return ops::batch_norm2d(x, gamma_, beta_, running_mean_, running_var_, training_);
}

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, Options opts) : opts_(opts) {
  for (auto& [name, p] : params) {
    CFRG_CHECK(p.requires_grad(), "AdamW got a frozen parameter: " + name);
    slots_.push_back({name, p, Tensor::zeros(p.shape()), Tensor::zeros(p.shape())});
  }
}

void AdamW::step() {
  ++step_count_;
  const real bc1 = 1.0 - std::pow(opts_.beta1, (real)step_count_);
  const real bc2 = 1.0 - std::pow(opts_.beta2, (real)step_count_);
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    auto& p = s.param.data();
    auto& g = s.param.grad();
    auto& m = s.m.data();
    auto& v = s.v.data();
    for (size_t i = 0; i < p.size(); ++i) {
      p[i] -= opts_.lr * opts_.weight_decay * p[i];  // decoupled decay
      m[i] = opts_.beta1 * m[i] + (1 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1 - opts_.beta2) * g[i] * g[i];
      const real mhat = m[i] / bc1;
      const real vhat = v[i] / bc2;
      p[i] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

std::vector<std::pair<std::string, Tensor>> AdamW::state_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& s : slots_) {
    out.emplace_back("m." + s.name, s.m);
    out.emplace_back("v." + s.name, s.v);
  }
  return out;
}

}  // namespace cfrg::nn
