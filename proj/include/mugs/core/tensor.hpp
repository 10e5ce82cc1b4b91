#pragma once

// Reverse-mode autodiff on dense float32 tensors.
//
// A Tensor is a shared handle to a Node. Ops allocate an output node, fill
// its data, and (only when some input needs gradients) attach parent edges
// plus a backward closure. Evaluation without gradient-requiring leaves
// therefore builds no graph and retains no memory.
//
// Gradients are float32; reductions inside ops accumulate in float64.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mugs {

using Shape = std::vector<int>;

class ShapeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ValueError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline int64_t numel_of(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
    os << "]";
    return os.str();
}

inline void check_shape_valid(const char* op, const Shape& s) {
    for (int d : s)
        if (d <= 0) throw ShapeError(std::string(op) + ": non-positive dim in shape " + shape_str(s));
}

struct Node {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;          // allocated lazily
    bool requires_grad = false;       // leaf parameter flag
    bool needs_grad = false;          // true if any ancestor requires grad
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    uint64_t id = 0;

    bool is_leaf() const { return parents.empty() && !backward_fn; }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

using NodePtr = std::shared_ptr<Node>;

inline uint64_t next_node_id() {
    static std::atomic<uint64_t> counter{0};
    return ++counter;
}

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor alloc(Shape s) {
        check_shape_valid("alloc", s);
        auto n = std::make_shared<Node>();
        n->data.resize(static_cast<size_t>(numel_of(s)));
        n->shape = std::move(s);
        n->id = next_node_id();
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape s) { return alloc(std::move(s)); }

    static Tensor full(Shape s, float v) {
        Tensor t = alloc(std::move(s));
        std::fill(t.node_->data.begin(), t.node_->data.end(), v);
        return t;
    }

    static Tensor from_data(Shape s, std::vector<float> v) {
        check_shape_valid("from_data", s);
        if (static_cast<int64_t>(v.size()) != numel_of(s))
            throw ShapeError("from_data: " + std::to_string(v.size()) + " values for shape " + shape_str(s));
        auto n = std::make_shared<Node>();
        n->shape = std::move(s);
        n->data = std::move(v);
        n->id = next_node_id();
        return Tensor(std::move(n));
    }

    static Tensor scalar(float v) { return from_data({1}, {v}); }

    // Leaf that participates in gradients (a trainable parameter).
    static Tensor param(Shape s, std::vector<float> v) {
        Tensor t = from_data(std::move(s), std::move(v));
        t.node_->requires_grad = true;
        t.node_->needs_grad = true;
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

    const float* data() const { return node_->data.data(); }
    float* mut_data() { return node_->data.data(); }
    const std::vector<float>& vec() const { return node_->data; }

    float item() const {
        if (numel() != 1) throw ShapeError("item: tensor has shape " + shape_str(shape()));
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool needs_grad() const { return node_->needs_grad; }

    // Leaf-only copy with no graph connection.
    Tensor detach() const {
        auto n = std::make_shared<Node>();
        n->shape = node_->shape;
        n->data = node_->data;
        n->id = next_node_id();
        return Tensor(std::move(n));
    }

    // Gradient of a leaf (zeros if never touched by backward).
    std::vector<float> grad() const {
        if (node_->grad.size() == node_->data.size()) return node_->grad;
        return std::vector<float>(node_->data.size(), 0.0f);
    }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
    }

    NodePtr node() const { return node_; }
    uint64_t id() const { return node_->id; }

  private:
    NodePtr node_;
};

namespace autograd {

// Attaches provenance to `out`. The backward closure runs only if some input
// needs gradients; otherwise inputs are not retained.
inline void record(const char* op, Tensor& out, std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> backward) {
    Node& n = *out.node();
    n.op = op;
    bool needs = false;
    for (const Tensor& t : inputs) needs |= t.needs_grad();
    if (!needs) return;
    n.needs_grad = true;
    n.parents.reserve(inputs.size());
    for (const Tensor& t : inputs) n.parents.push_back(t.node());
    n.backward_fn = std::move(backward);
}

inline void topo_order(Node* root, std::vector<Node*>& order) {
    // Iterative post-order DFS over parent edges.
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->needs_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace autograd

// Accumulates d(loss)/d(leaf) into each reachable leaf with requires_grad.
// Leaf grads accumulate across calls; interior grads are scratch.
inline void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    Node* root = loss.node().get();
    if (!root->needs_grad) return;  // no parameter influences the loss

    std::vector<Node*> order;
    autograd::topo_order(root, order);

    for (Node* n : order) {
        if (n->is_leaf()) {
            if (n->requires_grad) n->ensure_grad();
        } else {
            n->grad.assign(n->data.size(), 0.0f);
        }
    }
    root->ensure_grad();
    root->grad[0] = 1.0f;

    // order is post-order (parents before children), so reverse iteration
    // visits each node after all its consumers.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }

    // Free interior scratch.
    for (Node* n : order)
        if (!n->is_leaf()) n->grad = std::vector<float>();
}

// First node (lowest id) whose output contains a non-finite value while all
// parents are finite. Returns empty string if the graph is clean.
inline std::string first_nonfinite_op(const Tensor& root) {
    std::vector<Node*> order;
    {
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, size_t>> stack;
        stack.emplace_back(root.node().get(), 0);
        seen.insert(root.node().get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                Node* p = node->parents[next++].get();
                if (seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }
    auto finite = [](const Node* n) {
        for (float v : n->data)
            if (!std::isfinite(v)) return false;
        return true;
    };
    const Node* culprit = nullptr;
    for (const Node* n : order) {
        if (finite(n)) continue;
        bool parents_ok = true;
        for (const auto& p : n->parents) parents_ok &= finite(p.get());
        if (!parents_ok) continue;
        if (!culprit || n->id < culprit->id) culprit = n;
    }
    return culprit ? culprit->op : std::string();
}

}  // namespace mugs
