#ifndef GMLEARN_MODEL_IO_HPP
#define GMLEARN_MODEL_IO_HPP

#include <iosfwd>
#include <string>
#include <utility>

#include "gmlearn/tables.hpp"

namespace gmlearn {

struct Model {
    Graph graph;
    TableVec theta;
};

/// Model file: JSON {nodes, labels, edges, theta_unary, theta_edge},
/// tables row-major in edge order.
Model load_model_json(const std::string& path);
void save_model_json(const std::string& path, const Model& m);

/// Labelings CSV: one row per instance, -1 encodes HIDDEN.
std::vector<Labeling> load_labelings_csv(const std::string& path);
void save_labelings_csv(const std::string& path, const std::vector<Labeling>& rows);

}  // namespace gmlearn

#endif
