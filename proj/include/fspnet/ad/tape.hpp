#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fspnet/types.hpp"

namespace fspnet::ad {

/// Row-major n-d array shape, up to 3 axes. A scalar is {1} with ndim 1.
struct Shape {
    std::array<Eigen::Index, 3> d{1, 1, 1};
    int ndim = 1;

    Shape() = default;
    Shape(Eigen::Index n) : d{n, 1, 1}, ndim(1) {}
    Shape(Eigen::Index r, Eigen::Index c) : d{r, c, 1}, ndim(2) {}
    Shape(Eigen::Index a, Eigen::Index b, Eigen::Index c) : d{a, b, c}, ndim(3) {}

    Eigen::Index size() const {
        Eigen::Index s = 1;
        for (int i = 0; i < ndim; ++i) s *= d[i];
        return s;
    }
    Eigen::Index rows() const { return d[0]; }
    Eigen::Index cols() const { return ndim > 1 ? d[1] : 1; }
    bool is_scalar() const { return size() == 1; }
    bool operator==(const Shape& o) const {
        return ndim == o.ndim && d == o.d;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const {
        std::string s = "[";
        for (int i = 0; i < ndim; ++i)
            s += std::to_string(d[i]) + (i + 1 < ndim ? "," : "");
        return s + "]";
    }
};

/// One trainable tensor plus its AdamW state and accumulated gradient.
struct Param {
    ArrayX value;
    ArrayX grad;
    ArrayX moment1;
    ArrayX moment2;
    Shape shape;
    std::int64_t step_count = 0;
    bool frozen = false;

    void zero_grad() { grad.setZero(); }
};

/// Ordered, name-addressed collection of Params ("encoder.conv0.weight", ...).
class ParamStore {
public:
    Param& add(const std::string& name, const Shape& shape, ArrayX init) {
        FSPNET_REQUIRE(!index_.count(name), "ParamStore: duplicate name " + name);
        FSPNET_REQUIRE(init.size() == shape.size(),
                       "ParamStore: init size mismatch for " + name);
        index_[name] = entries_.size();
        entries_.push_back({name, Param{}});
        Param& p = entries_.back().second;
        p.value = std::move(init);
        p.grad = ArrayX::Zero(shape.size());
        p.moment1 = ArrayX::Zero(shape.size());
        p.moment2 = ArrayX::Zero(shape.size());
        p.shape = shape;
        return p;
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Param& at(const std::string& name) {
        auto it = index_.find(name);
        FSPNET_REQUIRE(it != index_.end(), "ParamStore: unknown name " + name);
        return entries_[it->second].second;
    }
    const Param& at(const std::string& name) const {
        auto it = index_.find(name);
        FSPNET_REQUIRE(it != index_.end(), "ParamStore: unknown name " + name);
        return entries_[it->second].second;
    }

    std::size_t size() const { return entries_.size(); }
    const std::string& name(std::size_t i) const { return entries_[i].first; }
    Param& param(std::size_t i) { return entries_[i].second; }
    const Param& param(std::size_t i) const { return entries_[i].second; }

    void zero_grads() {
        for (auto& [n, p] : entries_) p.zero_grad();
    }

    /// Freeze or thaw every entry whose name starts with `prefix`.
    int set_frozen(const std::string& prefix, bool frozen) {
        int hits = 0;
        for (auto& [n, p] : entries_) {
            if (n.rfind(prefix, 0) == 0) {
                p.frozen = frozen;
                ++hits;
            }
        }
        return hits;
    }

    /// FNV-1a over the raw value bytes of every entry matching `prefix`.
    std::uint64_t checksum(const std::string& prefix = "") const {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (const auto& [n, p] : entries_) {
            if (n.rfind(prefix, 0) != 0) continue;
            const auto* bytes =
                reinterpret_cast<const unsigned char*>(p.value.data());
            for (Eigen::Index i = 0; i < p.value.size() * Eigen::Index(sizeof(Real)); ++i) {
                h ^= bytes[i];
                h *= 0x100000001B3ULL;
            }
        }
        return h;
    }

private:
    std::vector<std::pair<std::string, Param>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct BackwardDiagnostics {
    bool output_finite = true;
    int nonfinite_param_grads = 0;
    bool clean() const { return output_finite && nonfinite_param_grads == 0; }
};

class Tape;

/// Lightweight handle to a tape node. Copyable, trivially small.
struct Var {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const ArrayX& value() const;
    const Shape& shape() const;
};

/// Eager computation graph for one forward/backward pass. Nodes are appended
/// in evaluation order, so reverse iteration is a valid topological order.
class Tape {
public:
    struct Node {
        ArrayX val;
        Shape shape;
        ArrayX grad;           // allocated on first accumulation
        bool grad_touched = false;
        bool needs_grad = false;
        std::function<void(Tape&, const ArrayX&)> back;  // distributes grad to parents
        Param* leaf = nullptr;
    };

    Var make(ArrayX val, const Shape& shape, bool needs_grad,
             std::function<void(Tape&, const ArrayX&)> back = nullptr) {
        FSPNET_REQUIRE(val.size() == shape.size(), "Tape: value/shape mismatch");
        Node n;
        n.val = std::move(val);
        n.shape = shape;
        n.needs_grad = needs_grad;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{this, std::int32_t(nodes_.size() - 1)};
    }

    /// Constant leaf; gradients never flow into it.
    Var constant(ArrayX val, const Shape& shape) {
        return make(std::move(val), shape, false);
    }
    Var constant(Real x) { return constant(ArrayX::Constant(1, x), Shape(1)); }

    /// Trainable leaf; backward accumulates into the Param's grad slot.
    Var leaf(Param& p) {
        Var v = make(p.value, p.shape, !p.frozen);
        nodes_[v.id].leaf = &p;
        return v;
    }

    const Node& node(std::int32_t id) const { return nodes_[id]; }
    Node& node(std::int32_t id) { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }

    /// Accumulate `g` into node `id`'s gradient (allocating lazily).
    void accumulate(std::int32_t id, const ArrayX& g) {
        Node& n = nodes_[id];
        if (!n.needs_grad) return;
        if (!n.grad_touched) {
            n.grad = g;
            n.grad_touched = true;
        } else {
            n.grad += g;
        }
    }

    /// Reverse pass from a scalar output. Repeated calls accumulate into
    /// Param grads (the trainer zeroes them explicitly).
    BackwardDiagnostics backward(Var out) {
        FSPNET_REQUIRE(out.tape == this, "backward: var from another tape");
        FSPNET_REQUIRE(nodes_[out.id].shape.is_scalar(),
                       "backward: output must be scalar");
        BackwardDiagnostics diag;
        diag.output_finite = std::isfinite(nodes_[out.id].val[0]);
        accumulate(out.id, ArrayX::Constant(1, 1.0));
        for (std::int32_t id = out.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.grad_touched) continue;
            if (n.back) n.back(*this, n.grad);
            if (n.leaf && !n.leaf->frozen) {
                if (!n.grad.allFinite()) ++diag.nonfinite_param_grads;
                n.leaf->grad += n.grad;
            }
        }
        // clear transient grads so a second backward() starts fresh
        for (auto& n : nodes_) {
            n.grad_touched = false;
            n.grad.resize(0);
        }
        return diag;
    }

private:
    std::vector<Node> nodes_;
};

inline const ArrayX& Var::value() const { return tape->node(id).val; }
inline const Shape& Var::shape() const { return tape->node(id).shape; }

/// Read a 2-D node as a row-major matrix view.
inline ConstMapRowMatrix as_matrix(const Var& v) {
    const auto& sh = v.shape();
    return ConstMapRowMatrix(v.value().data(), sh.rows(), sh.cols());
}

inline ConstMapRowMatrix as_matrix(const ArrayX& a, Eigen::Index r, Eigen::Index c) {
    return ConstMapRowMatrix(a.data(), r, c);
}

}  // namespace fspnet::ad
