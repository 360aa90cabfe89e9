#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gas {

using Shape = std::vector<int>;

inline long numel_of(const Shape& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

namespace detail {
template <typename... A>
std::string str(A&&... a) {
    std::ostringstream os;
    (os << ... << a);
    return os.str();
}
}  // namespace detail

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

// Dense row-major tensor node. Scalar type S is float for all production
// paths; double instantiations exist for finite-difference gradient checks.
template <typename S>
struct TensorNode {
    Shape shape;
    std::vector<S> v;
    std::vector<S> g;  // allocated lazily, always shape-matched to v
    bool requires_grad = false;
    bool on_tape = false;
};

template <typename S>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, S fill = S(0))
        : n_(std::make_shared<TensorNode<S>>()) {
        n_->shape = std::move(shape);
        n_->v.assign(numel_of(n_->shape), fill);
    }
    static Tensor scalar_of(S value) {
        Tensor t(Shape{1});
        t.n_->v[0] = value;
        return t;
    }
    static Tensor from(Shape shape, std::vector<S> data) {
        require((long)data.size() == numel_of(shape),
                detail::str("tensor data size ", data.size(), " does not match shape ", shape_str(shape)));
        Tensor t;
        t.n_ = std::make_shared<TensorNode<S>>();
        t.n_->shape = std::move(shape);
        t.n_->v = std::move(data);
        return t;
    }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int dim(int i) const { return n_->shape[i]; }
    int rank() const { return (int)n_->shape.size(); }
    long numel() const { return (long)n_->v.size(); }

    S* data() { return n_->v.data(); }
    const S* data() const { return n_->v.data(); }
    std::vector<S>& values() { return n_->v; }
    const std::vector<S>& values() const { return n_->v; }

    S item() const {
        require(numel() == 1, detail::str("item() on non-scalar tensor ", shape_str(shape())));
        return n_->v[0];
    }

    void set_requires_grad(bool rg = true) { n_->requires_grad = rg; }
    bool requires_grad() const { return n_->requires_grad; }
    bool on_tape() const { return n_->on_tape; }
    void mark_on_tape() { n_->on_tape = true; }
    bool tracked() const { return n_->requires_grad || n_->on_tape; }

    bool has_grad() const { return !n_->g.empty(); }
    std::vector<S>& grad() {
        if (n_->g.empty()) n_->g.assign(n_->v.size(), S(0));
        return n_->g;
    }
    const std::vector<S>& grad() const { return n_->g; }
    void zero_grad() {
        if (!n_->g.empty()) std::fill(n_->g.begin(), n_->g.end(), S(0));
    }

    std::shared_ptr<TensorNode<S>> node() const { return n_; }

private:
    std::shared_ptr<TensorNode<S>> n_;
};

// Reverse-mode tape. Ops are recorded in forward execution order, which is a
// topological order of the graph, so replaying closures back-to-front visits
// every node after all of its consumers.
template <typename S>
class Tape {
public:
    void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }
    size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

    // Seeds d(loss)/d(loss) = 1, runs all recorded closures in reverse, then
    // clears the tape. Gradients stay on the leaves for the optimizer.
    void backward(Tensor<S> loss) {
        require(loss.defined() && loss.numel() == 1,
                detail::str("backward() needs a scalar loss, got ", loss.defined() ? shape_str(loss.shape()) : "<undefined>"));
        require(loss.on_tape(), "backward() loss is not on the tape");
        loss.grad()[0] += S(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
        clear();
    }

private:
    std::vector<std::function<void()>> ops_;
};

template <typename S>
inline Tape<S>*& active_tape() {
    thread_local Tape<S>* t = nullptr;
    return t;
}

// RAII recording scope; graph construction is single-threaded per tape.
template <typename S>
class TapeScope {
public:
    explicit TapeScope(Tape<S>& tape) : prev_(active_tape<S>()) { active_tape<S>() = &tape; }
    ~TapeScope() { active_tape<S>() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<S>* prev_;
};

// Ordered named parameter collection; iteration order is insertion order so
// optimizer state and checkpoint layout stay stable.
template <typename S>
struct ParamSet {
    std::vector<std::pair<std::string, Tensor<S>>> items;

    Tensor<S>& add(const std::string& name, Tensor<S> t) {
        for (auto& it : items)
            require(it.first != name, detail::str("duplicate parameter name '", name, "'"));
        t.set_requires_grad(true);
        items.emplace_back(name, std::move(t));
        return items.back().second;
    }
    Tensor<S>* find(const std::string& name) {
        for (auto& it : items)
            if (it.first == name) return &it.second;
        return nullptr;
    }
    std::vector<Tensor<S>> tensors() const {
        std::vector<Tensor<S>> out;
        out.reserve(items.size());
        for (auto& it : items) out.push_back(it.second);
        return out;
    }
    void append(const ParamSet& other, const std::string& prefix) {
        for (auto& it : other.items) {
            Tensor<S> t = it.second;
            for (auto& mine : items)
                require(mine.first != prefix + it.first, "duplicate parameter name on append");
            items.emplace_back(prefix + it.first, t);
        }
    }
    long total_params() const {
        long n = 0;
        for (auto& it : items) n += it.second.numel();
        return n;
    }
    void zero_grad() {
        for (auto& it : items) it.second.zero_grad();
    }
};

}  // namespace gas
