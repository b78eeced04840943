#include "medcast/infer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "medcast/dataset.hpp"

namespace medcast {
namespace {

void check_pair(const Field2D& a, const Field2D& b) {
    if (!(a.grid == b.grid)) {
        throw Error(Error::Kind::format, "medcast_pair: inputs are on different grids");
    }
    if (a.variable != b.variable) {
        throw Error(Error::Kind::format,
                    fmt::format("medcast_pair: variable mismatch ({} vs {})",
                                variable_name(a.variable), variable_name(b.variable)));
    }
    if (a.lead_hours != b.lead_hours) {
        throw Error(Error::Kind::format,
                    fmt::format("medcast_pair: lead hour mismatch ({} vs {})", a.lead_hours,
                                b.lead_hours));
    }
}

bool is_power_of_two(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

}  // namespace

CombineTree CombineTree::balanced(std::vector<Leaf> leaves) {
    CombineTree t;
    t.leaves_ = std::move(leaves);
    // Build bottom-up: adjacent pairs, then pairs of pairs.
    std::vector<std::unique_ptr<Node>> level;
    for (int i = 0; i < static_cast<int>(t.leaves_.size()); ++i) {
        auto n = std::make_unique<Node>();
        n->leaf = i;
        level.push_back(std::move(n));
    }
    if (!is_power_of_two(level.size())) {
        t.validate();  // throws with the explanatory message
    }
    while (level.size() > 1) {
        std::vector<std::unique_ptr<Node>> next;
        for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
            auto n = std::make_unique<Node>();
            n->left = std::move(level[i]);
            n->right = std::move(level[i + 1]);
            next.push_back(std::move(n));
        }
        level = std::move(next);
    }
    t.root_ = std::move(*level.front());
    t.validate();
    return t;
}

CombineTree CombineTree::parse(const std::string& layout, std::vector<Leaf> leaves) {
    CombineTree t;
    t.leaves_ = std::move(leaves);
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < layout.size() && std::isspace(static_cast<unsigned char>(layout[pos]))) ++pos;
    };
    std::function<Node(void)> parse_node = [&]() -> Node {
        skip_ws();
        if (pos >= layout.size()) {
            throw Error(Error::Kind::config, "tree layout: unexpected end of input");
        }
        Node n;
        if (layout[pos] == '(') {
            ++pos;
            n.left = std::make_unique<Node>(parse_node());
            skip_ws();
            if (pos >= layout.size() || layout[pos] != ',') {
                throw Error(Error::Kind::config, "tree layout: expected ','");
            }
            ++pos;
            n.right = std::make_unique<Node>(parse_node());
            skip_ws();
            if (pos >= layout.size() || layout[pos] != ')') {
                throw Error(Error::Kind::config, "tree layout: expected ')'");
            }
            ++pos;
        } else if (std::isdigit(static_cast<unsigned char>(layout[pos]))) {
            int v = 0;
            while (pos < layout.size() && std::isdigit(static_cast<unsigned char>(layout[pos]))) {
                v = v * 10 + (layout[pos] - '0');
                ++pos;
            }
            n.leaf = v;
        } else {
            throw Error(Error::Kind::config,
                        fmt::format("tree layout: unexpected character '{}'", layout[pos]));
        }
        return n;
    };
    t.root_ = parse_node();
    skip_ws();
    if (pos != layout.size()) {
        throw Error(Error::Kind::config, "tree layout: trailing characters");
    }
    t.validate();
    return t;
}

void CombineTree::collect(const Node& n, std::vector<int>& seen) {
    if (n.leaf >= 0) {
        seen.push_back(n.leaf);
        return;
    }
    if (!n.left || !n.right) {
        throw Error(Error::Kind::config, "tree layout: internal node must have two children");
    }
    collect(*n.left, seen);
    collect(*n.right, seen);
}

std::string CombineTree::layout_of(const Node& n) {
    if (n.leaf >= 0) return std::to_string(n.leaf);
    return "(" + layout_of(*n.left) + "," + layout_of(*n.right) + ")";
}

std::string CombineTree::layout() const { return layout_of(root_); }

void CombineTree::validate() const {
    if (!is_power_of_two(leaves_.size())) {
        throw Error(Error::Kind::config,
                    fmt::format("combination needs a power-of-two input count with equal "
                                "weighting; got {} inputs (other counts need non-1:1 weights, "
                                "which this tool does not support)",
                                leaves_.size()));
    }
    std::vector<int> seen;
    collect(root_, seen);
    std::vector<int> sorted = seen;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < static_cast<int>(leaves_.size()); ++i) {
        if (i >= static_cast<int>(sorted.size()) || sorted[i] != i) {
            throw Error(Error::Kind::config,
                        "tree layout must reference each input index exactly once");
        }
    }
    if (sorted.size() != leaves_.size()) {
        throw Error(Error::Kind::config,
                    "tree layout must reference each input index exactly once");
    }
    const Field2D& first = leaves_.front().field;
    for (const Leaf& l : leaves_) {
        if (!(l.field.grid == first.grid) || l.field.variable != first.variable ||
            l.field.lead_hours != first.lead_hours || l.field.init_time != first.init_time) {
            throw Error(Error::Kind::format,
                        "combination inputs must share grid, variable, init time, and lead");
        }
    }
}

Field2D medcast_pair(const NetworkWeights& w, const Field2D& a, const Field2D& b) {
    check_pair(a, b);
    a.validate();
    b.validate();

    NormParams norm;
    try {
        norm = compute_norm(std::vector<const Field2D*>{&a, &b}, norm_class_of(a.variable));
    } catch (const Error& e) {
        if (e.kind() != Error::Kind::numeric) throw;
        return a;  // both inputs constant and equal; the intermediate is that constant
    }

    const GridSpec& g = a.grid;
    const int ph = padded_dim(g.n_y, w.cfg.depth);
    const int pw = padded_dim(g.n_x, w.cfg.depth);

    Tensor<float> input(1, 2, ph, pw);
    const std::vector<double> na =
        pad_replicate(normalize_values(a.values, norm), g.n_x, g.n_y, pw, ph);
    const std::vector<double> nb =
        pad_replicate(normalize_values(b.values, norm), g.n_x, g.n_y, pw, ph);
    for (std::size_t i = 0; i < na.size(); ++i) {
        input.v[i] = static_cast<float>(na[i]);
        input.v[na.size() + i] = static_cast<float>(nb[i]);
    }

    const Tensor<float> out = forward(w, input);

    std::vector<double> padded(out.v.begin(), out.v.end());
    std::vector<double> trimmed = trim_padding(padded, pw, ph, g.n_x, g.n_y);

    const auto [amin, amax] = a.min_max();
    const auto [bmin, bmax] = b.min_max();
    const double lo = std::min(amin, bmin);
    const double hi = std::max(amax, bmax);

    Field2D result = a;
    for (std::size_t i = 0; i < trimmed.size(); ++i) {
        // Denormalize with the joint range, then pin to the joint envelope
        // so rounding can never escape it.
        const double v = norm.x_min + trimmed[i] * norm.range();
        result.values[i] = std::clamp(v, lo, hi);
    }
    return result;
}

Field2D medcast_combine(const NetworkWeights& w, const CombineTree& tree) {
    tree.validate();
    std::function<Field2D(const CombineTree::Node&)> eval =
        [&](const CombineTree::Node& n) -> Field2D {
        if (n.leaf >= 0) return tree.leaves()[n.leaf].field;
        const Field2D left = eval(*n.left);
        const Field2D right = eval(*n.right);
        return medcast_pair(w, left, right);
    };
    return eval(tree.root_);
}

double order_sensitivity(const NetworkWeights& w, const Field2D& a, const Field2D& b) {
    const Field2D ab = medcast_pair(w, a, b);
    const Field2D ba = medcast_pair(w, b, a);
    const auto [amin, amax] = a.min_max();
    const auto [bmin, bmax] = b.min_max();
    const double range = std::max(amax, bmax) - std::min(amin, bmin);
    if (range <= 0.0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < ab.values.size(); ++i) {
        const double d = ab.values[i] - ba.values[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(ab.values.size())) / range;
}

}  // namespace medcast
