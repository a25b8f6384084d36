#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "caps/common.hpp"

namespace caps::diff {

class Tape;

// Handle to a tensor living on a Tape. Cheap to copy; valid for the lifetime
// of the tape (until reset()).
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape. Each recorded node holds the ids of its operands and a
// backward rule; nodes are appended in forward order, which is by
// construction a topological order, and backward() replays them reversed.
//
// A tensor here is a slot: a row-major matrix value, a requires_grad flag and
// an optional gradient of the same shape. Values are immutable once written
// by their producing operation. A Tape is confined to one thread; independent
// tapes may run concurrently.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int out_id)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Matrix value) { return make_leaf(std::move(value), false); }

  // Leaf parameter; gradients accumulate here.
  Var variable(Matrix value) { return make_leaf(std::move(value), true); }

  Var make_leaf(Matrix value, bool requires_grad) {
    slots_.push_back(Slot{std::move(value), Matrix(), requires_grad, false});
    return Var{this, static_cast<int>(slots_.size()) - 1};
  }

  // Records an operation node. `backward` must accumulate input gradients via
  // accumulate_grad(); it runs only when the output gradient exists.
  Var emit(Matrix value, bool requires_grad, BackwardFn backward) {
    Var out = make_leaf(std::move(value), requires_grad);
    if (requires_grad) nodes_.push_back(Node{out.id, std::move(backward)});
    return out;
  }

  const Matrix& value(Var v) const { return slot(v).value; }
  bool requires_grad(Var v) const { return slot(v).requires_grad; }
  bool has_grad(Var v) const { return slot(v).grad_valid; }

  const Matrix& grad(Var v) const {
    const Slot& s = slot(v);
    if (!s.grad_valid) throw ContractError("tape: no gradient recorded for this tensor");
    return s.grad;
  }

  // Adds `delta` to the gradient of slot `id`, allocating zeros on first
  // touch. No-op if the slot does not require a gradient.
  template <typename Expr>
  void accumulate_grad(int id, const Expr& delta) {
    Slot& s = slots_[static_cast<std::size_t>(id)];
    if (!s.requires_grad) return;
    if (!s.grad_valid) {
      s.grad = Matrix::Zero(s.value.rows(), s.value.cols());
      s.grad_valid = true;
    }
    s.grad += delta;
  }

  // Clears previous gradients, seeds d(loss)/d(loss) = 1 and replays every
  // node once in reverse order. Gradients accumulate additively across
  // fan-out. Repeating the call reproduces identical gradients.
  void backward(Var loss) {
    if (loss.tape != this) throw ContractError("tape: loss belongs to a different tape");
    const Slot& ls = slot(loss);
    if (ls.value.rows() != 1 || ls.value.cols() != 1) {
      throw ContractError("tape: backward requires a scalar loss, got " + shape_str(ls.value));
    }
    for (Slot& s : slots_) s.grad_valid = false;
    if (!ls.requires_grad) return;
    Matrix seed(1, 1);
    seed(0, 0) = 1.0;
    accumulate_grad(loss.id, seed);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (slots_[static_cast<std::size_t>(it->out)].grad_valid) it->back(*this, it->out);
    }
  }

  // Drops all slots and nodes but keeps the allocation.
  void reset() {
    slots_.clear();
    nodes_.clear();
    attention_macs = 0;
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t slot_count() const { return slots_.size(); }

  // Multiply-accumulate counter bumped by attention-style consumers; used by
  // the complexity instrumentation.
  std::uint64_t attention_macs = 0;

 private:
  struct Slot {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool grad_valid = false;
  };
  struct Node {
    int out;
    BackwardFn back;
  };

  const Slot& slot(Var v) const {
    if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= slots_.size()) {
      throw ContractError("tape: invalid tensor handle");
    }
    return slots_[static_cast<std::size_t>(v.id)];
  }

  std::vector<Slot> slots_;
  std::vector<Node> nodes_;
};

inline double scalar_value(Var v) {
  const Matrix& m = v.tape->value(v);
  if (m.rows() != 1 || m.cols() != 1) throw ContractError("expected a scalar, got " + shape_str(m));
  return m(0, 0);
}

}  // namespace caps::diff
