#pragma once

// Reverse-mode differentiation over a linear record of operations.
// Nodes hold values; each recorded op holds a closure that pushes the
// output gradient back onto its inputs. Gradients are accumulated in
// reverse record order, which fixes the floating-point reduction order
// and keeps repeated runs bit-identical.

#include <functional>
#include <unordered_map>
#include <vector>

#include "s2d/tensor.hpp"

namespace s2d {

template <typename T>
class Tape;

// Handle to one node on a tape. Cheap to copy; does not own anything.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    i64 id = -1;

    const Tensor<T>& val() const;
    const Shape4& shape() const;
};

// Gradients produced by Tape::backward, keyed by node id. Leaves that
// require gradients but were never reached get zeros of their shape.
template <typename T>
class Grads {
public:
    const Tensor<T>& at(i64 id) const {
        auto it = map_.find(id);
        check(it != map_.end(), "no gradient recorded for node " + std::to_string(id));
        return it->second;
    }
    std::unordered_map<i64, Tensor<T>> map_;
};

template <typename T>
class Tape {
public:
    // Passed to backward closures. grad(i) reads the accumulated gradient
    // of node i; accum(i, g) adds into it; needs(i) tells the closure
    // whether anything upstream wants that input's gradient at all.
    struct Ctx {
        Tape& tape;
        std::vector<Tensor<T>>& grads;
        std::vector<char>& touched;

        bool needs(i64 id) const { return tape.nodes_[static_cast<size_t>(id)].needs; }
        const Tensor<T>& val(i64 id) const { return tape.value(id); }
        const Tensor<T>& grad(i64 id) const {
            check(touched[static_cast<size_t>(id)], "gradient read before any accumulation");
            return grads[static_cast<size_t>(id)];
        }
        void accum(i64 id, const Tensor<T>& g) {
            auto& slot = grads[static_cast<size_t>(id)];
            if (!touched[static_cast<size_t>(id)]) {
                check(g.shape == tape.value(id).shape, "gradient shape mismatch on accumulation");
                slot = g;
                touched[static_cast<size_t>(id)] = 1;
            } else {
                check(g.shape == slot.shape, "gradient shape mismatch on accumulation");
                for (size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += g.data[i];
            }
        }
    };
    // Closures receive the id of the op's own output so they can read its
    // accumulated gradient.
    using BackFn = std::function<void(Ctx&, i64 out)>;

    // Input node whose gradient the caller wants back.
    Var<T> leaf(Tensor<T> value) {
        nodes_.push_back({std::move(value), true, true});
        return {this, static_cast<i64>(nodes_.size()) - 1};
    }

    // Input node treated as fixed data; no gradient flows into it.
    Var<T> constant(Tensor<T> value) {
        nodes_.push_back({std::move(value), false, false});
        return {this, static_cast<i64>(nodes_.size()) - 1};
    }

    // Op output. The closure runs during backward() iff some input needs
    // a gradient; inputs must already live on this tape.
    Var<T> record(Tensor<T> value, const std::vector<i64>& inputs, BackFn fn) {
        const i64 out = static_cast<i64>(nodes_.size());
        bool needs = false;
        for (i64 in : inputs) {
            check(in >= 0 && in < out, "op input must precede its output on the tape");
            needs = needs || nodes_[static_cast<size_t>(in)].needs;
        }
        nodes_.push_back({std::move(value), false, needs});
        if (needs) ops_.push_back({out, std::move(fn)});
        return {this, out};
    }

    const Tensor<T>& value(i64 id) const {
        check(id >= 0 && id < static_cast<i64>(nodes_.size()), "node id out of range");
        return nodes_[static_cast<size_t>(id)].value;
    }

    bool needs_grad(i64 id) const { return nodes_[static_cast<size_t>(id)].needs; }

    i64 size() const { return static_cast<i64>(nodes_.size()); }

    // Seed the scalar loss with 1 and run every recorded closure in
    // reverse. Returns gradients for all gradient-requiring leaves.
    Grads<T> backward(Var<T> loss) {
        check(loss.tape == this, "loss lives on a different tape");
        check(value(loss.id).shape == Shape4{1, 1, 1, 1},
              "backward expects a scalar loss, got " + value(loss.id).shape.str());

        std::vector<Tensor<T>> grads(nodes_.size());
        std::vector<char> touched(nodes_.size(), 0);
        grads[static_cast<size_t>(loss.id)] = Tensor<T>::scalar(T(1));
        touched[static_cast<size_t>(loss.id)] = 1;

        Ctx ctx{*this, grads, touched};
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it)
            if (touched[static_cast<size_t>(it->output)]) it->fn(ctx, it->output);

        Grads<T> out;
        for (size_t i = 0; i < nodes_.size(); ++i) {
            if (!nodes_[i].is_leaf || !nodes_[i].needs) continue;
            if (touched[i])
                out.map_.emplace(static_cast<i64>(i), std::move(grads[i]));
            else
                out.map_.emplace(static_cast<i64>(i), Tensor<T>(nodes_[i].value.shape));
        }
        return out;
    }

private:
    struct Node {
        Tensor<T> value;
        bool is_leaf;
        bool needs;
    };
    struct OpRecord {
        i64 output;
        BackFn fn;
    };
    std::vector<Node> nodes_;
    std::vector<OpRecord> ops_;
};

template <typename T>
const Tensor<T>& Var<T>::val() const {
    return tape->value(id);
}

template <typename T>
const Shape4& Var<T>::shape() const {
    return tape->value(id).shape;
}

}  // namespace s2d
