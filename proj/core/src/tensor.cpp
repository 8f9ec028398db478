#include "cfrg/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace cfrg {

namespace {
thread_local bool g_grad_enabled = true;

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    CFRG_CHECK(d > 0, "non-positive dimension in shape");
    n *= d;
  }
  return n;
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign((size_t)shape_numel(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, real fill, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), fill);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<real> data, bool requires_grad) {
  CFRG_CHECK((int64_t)data.size() == shape_numel(shape), "from_data: size mismatch");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(real v, bool requires_grad) { return full({1}, v, requires_grad); }

Tensor Tensor::randn(std::vector<int> shape, RngStream& rng, real stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (real& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

Tensor Tensor::uniform(std::vector<int> shape, RngStream& rng, real lo, real hi,
                       bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (real& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->value = node_->value;  // copy of the buffer; graph-free
  n->requires_grad = false;
  return Tensor(std::move(n));
}

Tensor Tensor::clone() const { return detach(); }

void Tensor::backward() const {
  CFRG_CHECK(defined() && numel() == 1, "backward() expects a defined scalar");
  // iterative DFS topological order over parents
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  std::unordered_set<detail::Node*> onstack;
  stack.push_back({node_.get(), 0});
  onstack.insert(node_.get());
  while (!stack.empty()) {
    auto& [nd, idx] = stack.back();
    if (idx < nd->parents.size()) {
      detail::Node* p = nd->parents[idx++].get();
      if (!visited.count(p) && !onstack.count(p)) {
        stack.push_back({p, 0});
        onstack.insert(p);
      }
    } else {
      visited.insert(nd);
      onstack.erase(nd);
      order.push_back(nd);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* nd = *it;
    if (nd->backward_fn && nd->grad.size() == nd->value.size()) nd->backward_fn(*nd);
  }
}

}  // namespace cfrg
