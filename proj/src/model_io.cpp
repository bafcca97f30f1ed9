#include "gmlearn/model_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gmlearn {

using nlohmann::json;

Model load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    json j;
    in >> j;

    const int n = j.at("nodes").get<int>();
    auto labels = j.at("labels").get<std::vector<int>>();
    if (static_cast<int>(labels.size()) != n)
        throw std::runtime_error("model file: labels length != nodes");
    for (int l : labels)
        if (l < 2) throw std::runtime_error("model file: labels must be >= 2");
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : j.at("edges"))
        edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});

    Graph g(labels, edges);
    TableVec theta(g);
    const auto& tu = j.at("theta_unary");
    if (static_cast<int>(tu.size()) != n)
        throw std::runtime_error("model file: theta_unary length mismatch");
    for (int i = 0; i < n; ++i) {
        auto row = tu[i].get<std::vector<double>>();
        if (static_cast<int>(row.size()) != g.labels(i))
            throw std::runtime_error("model file: theta_unary row size mismatch");
        for (int x = 0; x < g.labels(i); ++x) theta.u(i, x) = row[x];
    }
    const auto& te = j.at("theta_edge");
    if (static_cast<int>(te.size()) != g.edge_count())
        throw std::runtime_error("model file: theta_edge length mismatch");
    for (int e = 0; e < g.edge_count(); ++e) {
        auto row = te[e].get<std::vector<double>>();  // row-major
        auto span = theta.edge(e);
        if (row.size() != span.size())
            throw std::runtime_error("model file: theta_edge table size mismatch");
        std::copy(row.begin(), row.end(), span.begin());
    }
    for (double v : theta.raw())
        if (!std::isfinite(v)) throw std::runtime_error("model file: non-finite theta");
    return Model{std::move(g), std::move(theta)};
}

void save_model_json(const std::string& path, const Model& m) {
    json j;
    j["nodes"] = m.graph.node_count();
    j["labels"] = m.graph.labels_per_node();
    json edges = json::array();
    for (const auto& [a, b] : m.graph.edges()) edges.push_back({a, b});
    j["edges"] = edges;
    json tu = json::array();
    for (int i = 0; i < m.graph.node_count(); ++i) {
        auto s = m.theta.unary(i);
        tu.push_back(std::vector<double>(s.begin(), s.end()));
    }
    j["theta_unary"] = tu;
    json te = json::array();
    for (int e = 0; e < m.graph.edge_count(); ++e) {
        auto s = m.theta.edge(e);
        te.push_back(std::vector<double>(s.begin(), s.end()));
    }
    j["theta_edge"] = te;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << j.dump(2) << "\n";
}

std::vector<Labeling> load_labelings_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open labelings file: " + path);
    std::vector<Labeling> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Labeling row;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) row.push_back(std::stoi(tok));
        rows.push_back(std::move(row));
    }
    return rows;
}

void save_labelings_csv(const std::string& path, const std::vector<Labeling>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write labelings file: " + path);
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << row[i];
        out << "\n";
    }
}

}  // namespace gmlearn
