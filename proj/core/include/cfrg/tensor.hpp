#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cfrg/common.hpp"
#include "cfrg/rng.hpp"

namespace cfrg {

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<real> value;
  std::vector<real> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  int64_t numel() const { return (int64_t)value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Reverse-mode autodiff tensor. Value semantics on a shared node; building an
// op while grad mode is on records the backward closure on the result.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, real fill, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<real> data,
                          bool requires_grad = false);
  static Tensor scalar(real v, bool requires_grad = false);
  // i.i.d. draws from the given stream
  static Tensor randn(std::vector<int> shape, RngStream& rng, real stddev = 1.0,
                      bool requires_grad = false);
  static Tensor uniform(std::vector<int> shape, RngStream& rng, real lo, real hi,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[(size_t)i]; }
  int ndim() const { return (int)node_->shape.size(); }
  int64_t numel() const { return node_->numel(); }

  std::vector<real>& data() { return node_->value; }
  const std::vector<real>& data() const { return node_->value; }
  std::vector<real>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  real item() const {
    CFRG_CHECK(numel() == 1, "item() on non-scalar tensor");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  // Backpropagate from this scalar through the recorded graph.
  void backward() const;

  // Same storage, detached from the graph.
  Tensor detach() const;
  // Deep copy of the value buffer, no graph.
  Tensor clone() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Grad-mode stack (thread-local). Forward passes under NoGradGuard build
// leaf results with no tape.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// NCHW helpers
inline int64_t offset4(const std::vector<int>& s, int n, int c, int h, int w) {
  return (((int64_t)n * s[1] + c) * s[2] + h) * s[3] + w;
}

}  // namespace cfrg
