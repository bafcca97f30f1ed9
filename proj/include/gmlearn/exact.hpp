#ifndef GMLEARN_EXACT_HPP
#define GMLEARN_EXACT_HPP

#include "gmlearn/tables.hpp"

namespace gmlearn {

struct ExactResult {
    double log_z = 0;
    TableVec marginals;
    double entropy = 0;
};

/// Exact inference by enumeration over all labelings.
/// Guarded at 2^22 joint states.
ExactResult brute_force(const Graph& g, const TableVec& theta);

/// Exact inference on a connected acyclic graph by two-pass elimination.
ExactResult tree_inference(const Graph& g, const TableVec& theta);

/// Per-node argmax of unary marginals; ties break toward the lowest label.
Labeling mpm_decide(const Graph& g, const TableVec& mu);

/// Fraction of observed nodes where pred and truth disagree.
/// mask entries of HIDDEN are skipped; throws if no node is observed.
double hamming_error(const Labeling& pred, const Labeling& truth,
                     const Labeling& mask);

}  // namespace gmlearn

#endif
