#pragma once

#include <memory>
#include <string>
#include <vector>

#include "medcast/grid.hpp"
#include "medcast/unet.hpp"

namespace medcast {

// Full binary combination tree over 2^k input fields. Internal nodes are
// pairwise intermediate operations.
class CombineTree {
public:
    struct Leaf {
        std::string model_id;
        Field2D field;
    };

    // Balanced tree in argument order: ((0,1),(2,3)), ...
    static CombineTree balanced(std::vector<Leaf> leaves);
    // Nested-parentheses layout over leaf indices, e.g. "((0,2),(1,3))".
    // Every index must appear exactly once.
    static CombineTree parse(const std::string& layout, std::vector<Leaf> leaves);

    int leaf_count() const { return static_cast<int>(leaves_.size()); }
    const std::vector<Leaf>& leaves() const { return leaves_; }
    std::string layout() const;

private:
    friend Field2D medcast_combine(const NetworkWeights&, const CombineTree&);

    struct Node {
        int leaf = -1;  // >= 0 for leaves
        std::unique_ptr<Node> left, right;
    };

    void validate() const;
    static void collect(const Node& n, std::vector<int>& seen);
    static std::string layout_of(const Node& n);

    std::vector<Leaf> leaves_;
    Node root_;
};

// Intermediate field between a and b: joint-range normalization, network
// evaluation in the given channel order, denormalization with the same
// range. Output values always lie inside the inputs' joint [min, max].
Field2D medcast_pair(const NetworkWeights& w, const Field2D& a, const Field2D& b);

// Post-order evaluation of the tree with medcast_pair at each node.
Field2D medcast_combine(const NetworkWeights& w, const CombineTree& tree);

// RMS difference between the two channel orders, normalized by the joint
// value range; 0 means perfectly order-invariant.
double order_sensitivity(const NetworkWeights& w, const Field2D& a, const Field2D& b);

}  // namespace medcast
