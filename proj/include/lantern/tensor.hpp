#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace lantern {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reverse-mode tape. Ops push backward closures during the forward pass;
// backward() replays them in reverse creation order, which is a valid
// topological order of the graph. One tape per training step, one thread.
template <class T>
class Tape {
 public:
  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  void run_backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

namespace detail {
template <class T>
inline thread_local Tape<T>* g_active_tape = nullptr;
}

template <class T>
Tape<T>* active_tape() {
  return detail::g_active_tape<T>;
}

// Activates a tape on this thread for the lifetime of the scope.
template <class T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : prev_(detail::g_active_tape<T>) {
    detail::g_active_tape<T> = &tape;
  }
  ~TapeScope() { detail::g_active_tape<T> = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* prev_;
};

// Temporarily detaches the active tape (used for reference-policy scoring
// inside a recorded update step).
template <class T>
class PauseTape {
 public:
  PauseTape() : prev_(detail::g_active_tape<T>) { detail::g_active_tape<T> = nullptr; }
  ~PauseTape() { detail::g_active_tape<T> = prev_; }
  PauseTape(const PauseTape&) = delete;
  PauseTape& operator=(const PauseTape&) = delete;

 private:
  Tape<T>* prev_;
};

// Dense row-major tensor with shared storage. Values are written once during
// the forward pass; grad is a same-shape accumulator allocated lazily.
template <class T>
class TensorT {
 public:
  using value_type = T;

  TensorT() = default;

  static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
    TensorT t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->data.assign(numel_of(t.s_->shape), T(0));
    t.s_->requires_grad = requires_grad;
    return t;
  }

  static TensorT from(std::vector<int> shape, std::vector<T> data,
                      bool requires_grad = false) {
    TensorT t;
    t.s_ = std::make_shared<Storage>();
    if (numel_of(shape) != data.size())
      throw ShapeError("tensor: shape does not match data length");
    t.s_->shape = std::move(shape);
    t.s_->data = std::move(data);
    t.s_->requires_grad = requires_grad;
    return t;
  }

  static TensorT scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return s_ != nullptr; }
  const std::vector<int>& shape() const { return s_->shape; }
  std::size_t numel() const { return s_->data.size(); }
  int dim(int i) const { return s_->shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(s_->shape.size()); }

  T* data() { return s_->data.data(); }
  const T* data() const { return s_->data.data(); }
  std::vector<T>& vec() { return s_->data; }
  const std::vector<T>& vec() const { return s_->data; }

  T item() const {
    if (numel() != 1) throw ShapeError("item(): tensor is not scalar");
    return s_->data[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool rg) { s_->requires_grad = rg; }

  bool has_grad() const { return s_->grad.size() == s_->data.size(); }
  void ensure_grad() {
    if (!has_grad()) s_->grad.assign(s_->data.size(), T(0));
  }
  T* grad() {
    ensure_grad();
    return s_->grad.data();
  }
  const std::vector<T>& grad_vec() const { return s_->grad; }
  void zero_grad() {
    if (has_grad()) s_->grad.assign(s_->data.size(), T(0));
  }

  // Seeds d(loss)/d(loss) = 1 and replays the active tape.
  void backward() {
    if (numel() != 1)
      throw NumericError("backward(): loss must be a scalar tensor");
    Tape<T>* tape = active_tape<T>();
    if (!tape) throw NumericError("backward(): no active tape on this thread");
    ensure_grad();
    s_->grad[0] += T(1);
    tape->run_backward();
  }

  bool same_storage(const TensorT& o) const { return s_ == o.s_; }

  static std::size_t numel_of(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ShapeError("tensor: negative extent");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

 private:
  struct Storage {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until ensure_grad()
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

inline std::string shape_str(const std::vector<int>& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

}  // namespace lantern
