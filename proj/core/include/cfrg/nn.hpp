#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cfrg/ops.hpp"
#include "cfrg/tensor.hpp"

namespace cfrg::nn {

// Base class with a named parameter/buffer registry. Names are
// dot-separated paths, stable across runs; checkpoints key on them.
class Module {
 public:
  virtual ~Module() = default;

  Tensor& register_parameter(const std::string& name, Tensor t);
  Tensor& register_buffer(const std::string& name, Tensor t);
  void register_module(const std::string& name, std::shared_ptr<Module> m);

  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix = "") const;
  std::vector<std::pair<std::string, Tensor>> named_buffers(const std::string& prefix = "") const;
  std::vector<Tensor> parameters() const;

  void set_training(bool training);
  bool training() const { return training_; }

  void zero_grad();
  void freeze();  // drops requires_grad on every parameter
  int64_t parameter_count() const;

  // FNV hash over every parameter and buffer byte; frozen-teacher contract.
  uint64_t state_hash() const;

 protected:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
  std::vector<std::pair<std::string, std::shared_ptr<Module>>> children_;
  bool training_ = true;
};

// Kaiming-normal fan-out init, the convnet default.
Tensor kaiming_conv_weight(int c_out, int c_in_per_group, int kh, int kw, RngStream& rng);

class Conv2d : public Module {
 public:
  Conv2d(int c_in, int c_out, int kernel, int stride, int padding, RngStream& rng,
         bool bias = true, int groups = 1);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor weight_, bias_;
  int stride_, padding_, groups_;
};

class ConvTranspose2d : public Module {
 public:
  ConvTranspose2d(int c_in, int c_out, int kernel, int stride, int padding, RngStream& rng,
                  bool bias = true);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor weight_, bias_;
  int stride_, padding_;
};

class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(int channels);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor gamma_, beta_, running_mean_, running_var_;
};

// Decoupled weight decay Adam (AdamW).
class AdamW {
 public:
  struct Options {
    real lr = 5e-4;
    real beta1 = 0.9;
    real beta2 = 0.999;
    real eps = 1e-8;
    real weight_decay = 1e-5;
  };

  AdamW(std::vector<std::pair<std::string, Tensor>> params, Options opts);

  void step();
  void zero_grad();
  void set_lr(real lr) { opts_.lr = lr; }
  real lr() const { return opts_.lr; }

  // state exposure for checkpointing, keyed by parameter name
  std::vector<std::pair<std::string, Tensor>> state_tensors() const;
  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t t) { step_count_ = t; }

 private:
  struct Slot {
    std::string name;
    Tensor param;
    Tensor m;
    Tensor v;
  };
  std::vector<Slot> slots_;
  Options opts_;
  int64_t step_count_ = 0;
};

}  // namespace cfrg::nn
