#include "gmlearn/data.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace gmlearn {

namespace {

using Rng = std::mt19937_64;

double unit(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

int sample_categorical(const std::vector<double>& logits, Rng& rng) {
    double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0;
    for (size_t k = 0; k < p.size(); ++k) {
        p[k] = std::exp(logits[k] - m);
        z += p[k];
    }
    double u = unit(rng) * z;
    for (size_t k = 0; k < p.size(); ++k) {
        u -= p[k];
        if (u <= 0) return static_cast<int>(k);
    }
    return static_cast<int>(p.size()) - 1;
}

void gibbs_sweep(const Model& model, Labeling& state, Rng& rng) {
    const Graph& g = model.graph;
    std::vector<double> logits;
    for (int i = 0; i < g.node_count(); ++i) {
        logits.assign(model.theta.unary(i).begin(), model.theta.unary(i).end());
        for (int e : g.incident(i)) {
            const auto& [a, b] = g.edge(e);
            int j = g.other_end(e, i);
            for (int xi = 0; xi < g.labels(i); ++xi)
                logits[xi] += (i == a) ? model.theta.e(e, xi, state[j])
                                       : model.theta.e(e, state[j], xi);
        }
        state[i] = sample_categorical(logits, rng);
    }
}

Instance make_denoise_instance(const std::vector<int>& x, int rows, int cols,
                               double noise, Rng& rng) {
    Instance inst{Graph::grid(rows, cols, 2), {}, {}, {}};
    const Graph& g = inst.graph;
    inst.target.resize(g.node_count());
    inst.ufeat.resize(static_cast<size_t>(g.node_count()) * 2);
    for (int i = 0; i < g.node_count(); ++i) {
        double t = unit(rng);
        double tn = std::pow(t, noise);
        double y = x[i] * (1.0 - tn) + (1 - x[i]) * tn;
        inst.ufeat[2 * i + 0] = 1.0;
        inst.ufeat[2 * i + 1] = y;
        inst.target[i] = x[i];
    }
    inst.efeat.resize(static_cast<size_t>(g.edge_count()) * 2);
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& [a, b] = g.edge(e);
        bool horizontal = (b == a + 1) && (cols > 1);
        inst.efeat[2 * e + 0] = horizontal ? 1.0 : 0.0;
        inst.efeat[2 * e + 1] = horizontal ? 0.0 : 1.0;
    }
    return inst;
}

std::vector<int> blob_image(int rows, int cols, Rng& rng) {
    std::vector<double> field(static_cast<size_t>(rows) * cols);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : field) v = gauss(rng);
    // Two passes of a 7-wide separable box blur give smooth blobs.
    auto blur = [&](int dr, int dc) {
        std::vector<double> out(field.size(), 0.0);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                double s = 0;
                int cnt = 0;
                for (int k = -3; k <= 3; ++k) {
                    int rr = r + k * dr, cc = c + k * dc;
                    if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
                    s += field[rr * cols + cc];
                    ++cnt;
                }
                out[r * cols + c] = s / cnt;
            }
        field.swap(out);
    };
    for (int pass = 0; pass < 2; ++pass) {
        blur(0, 1);
        blur(1, 0);
    }
    std::vector<double> sorted = field;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    double median = sorted[sorted.size() / 2];
    std::vector<int> img(field.size());
    for (size_t k = 0; k < field.size(); ++k) img[k] = field[k] > median ? 1 : 0;
    return img;
}

}  // namespace

ChainData gen_chain_model(const ChainGenConfig& config) {
    if (config.shift < 0 || config.shift >= config.n)
        throw std::invalid_argument("gen_chain_model: shift must be in [0, n)");
    Rng rng(config.seed);
    ChainData out{{Graph::ladder(config.n, 2), TableVec()}, {}};
    const Graph& g = out.model.graph;
    out.model.theta = TableVec(g);
    auto pm1 = [&] { return 2.0 * unit(rng) - 1.0; };
    for (int i = 0; i < g.node_count(); ++i)
        for (int x = 0; x < 2; ++x) out.model.theta.u(i, x) = pm1();
    for (int e = 0; e < g.edge_count(); ++e) {
        double t = pm1();
        for (int xi = 0; xi < 2; ++xi)
            for (int xj = 0; xj < 2; ++xj)
                out.model.theta.e(e, xi, xj) = (xi == xj) ? t : -t;
    }

    Labeling state(g.node_count());
    for (int& v : state) v = unit(rng) < 0.5 ? 0 : 1;
    const int burn = config.gibbs_sweeps / 2;
    const int thin = std::max(1, (config.gibbs_sweeps - burn) / std::max(1, config.samples));
    for (int s = 0; s < burn; ++s) gibbs_sweep(out.model, state, rng);
    while (static_cast<int>(out.samples.size()) < config.samples) {
        for (int s = 0; s < thin; ++s) gibbs_sweep(out.model, state, rng);
        out.samples.push_back(state);
    }
    out.samples = shift_x_layer(out.samples, config.n, config.shift);
    return out;
}

std::vector<Labeling> shift_x_layer(const std::vector<Labeling>& samples, int n,
                                    int shift) {
    std::vector<Labeling> out = samples;
    if (shift % n == 0) return out;
    for (size_t s = 0; s < samples.size(); ++s)
        for (int i = 0; i < n; ++i)
            out[s][i] = samples[s][(i + shift) % n];
    return out;
}

Dataset chain_to_dataset(int n, const std::vector<Labeling>& samples) {
    Dataset data;
    data.labels = 2;
    data.du = 2 * n;
    data.dv = n - 1;
    for (const Labeling& s : samples) {
        Instance inst{Graph::chain(n, 2), {}, {}, {}};
        inst.ufeat.assign(static_cast<size_t>(n) * data.du, 0.0);
        for (int i = 0; i < n; ++i) {
            inst.ufeat[static_cast<size_t>(i) * data.du + 2 * i + 0] = 1.0;
            inst.ufeat[static_cast<size_t>(i) * data.du + 2 * i + 1] =
                static_cast<double>(s[n + i]);
        }
        inst.efeat.assign(static_cast<size_t>(n - 1) * data.dv, 0.0);
        for (int e = 0; e < n - 1; ++e)
            inst.efeat[static_cast<size_t>(e) * data.dv + e] = 1.0;
        inst.target.assign(s.begin(), s.begin() + n);
        data.instances.push_back(std::move(inst));
    }
    return data;
}

DenoisePair gen_denoise(const DenoiseConfig& config) {
    if (!(config.noise > 1.0))
        throw std::invalid_argument("gen_denoise: noise level must be > 1");
    Rng rng(config.seed);
    DenoisePair out;
    for (Dataset* split : {&out.train, &out.test}) {
        split->labels = 2;
        split->du = 2;
        split->dv = 2;
    }
    for (int k = 0; k < config.train + config.test; ++k) {
        std::vector<int> img = blob_image(config.rows, config.cols, rng);
        Instance inst =
            make_denoise_instance(img, config.rows, config.cols, config.noise, rng);
        (k < config.train ? out.train : out.test).instances.push_back(std::move(inst));
    }
    return out;
}

Instance denoise_instance(const std::vector<int>& image, int rows, int cols,
                          double noise, std::uint64_t seed) {
    if (static_cast<int>(image.size()) != rows * cols)
        throw std::invalid_argument("denoise_instance: image size mismatch");
    if (!(noise > 1.0)) throw std::invalid_argument("denoise_instance: noise must be > 1");
    Rng rng(seed);
    return make_denoise_instance(image, rows, cols, noise, rng);
}

std::vector<double> sinusoidal_expand(const std::vector<double>& s) {
    const int d = static_cast<int>(s.size());
    const size_t m = size_t{1} << d;
    std::vector<double> out;
    out.reserve(2 * m);
    for (int pass = 0; pass < 2; ++pass)
        for (size_t c = 0; c < m; ++c) {
            double t = 0;
            for (int k = 0; k < d; ++k)
                if ((c >> k) & 1) t += s[k];
            out.push_back(pass == 0 ? std::sin(t) : std::cos(t));
        }
    return out;
}

void save_dataset(const std::string& dir, const Dataset& data,
                  const std::string& graph_kind, int rows, int cols,
                  std::uint64_t seed) {
    auto open = [&](const std::string& name) {
        std::ofstream f(dir + "/" + name);
        if (!f) throw std::runtime_error("cannot write " + dir + "/" + name);
        f.precision(17);
        return f;
    };
    auto write_rows = [](std::ofstream& f, const std::vector<double>& v, int width) {
        for (size_t k = 0; k < v.size(); ++k) {
            f << v[k];
            f << (((k + 1) % width == 0) ? '\n' : ',');
        }
    };
    {
        auto f = open("features_unary.csv");
        for (const auto& inst : data.instances) write_rows(f, inst.ufeat, data.du);
    }
    {
        auto f = open("features_edge.csv");
        for (const auto& inst : data.instances) write_rows(f, inst.efeat, data.dv);
    }
    {
        std::vector<Labeling> labels;
        for (const auto& inst : data.instances) labels.push_back(inst.target);
        save_labelings_csv(dir + "/labels.csv", labels);
    }
    nlohmann::json meta = {
        {"kind", graph_kind}, {"rows", rows},   {"cols", cols},
        {"labels", data.labels}, {"du", data.du}, {"dv", data.dv},
        {"instances", data.instances.size()},   {"seed", seed},
    };
    auto f = open("meta.json");
    f << meta.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream mf(dir + "/meta.json");
    if (!mf) throw std::runtime_error("cannot read " + dir + "/meta.json");
    nlohmann::json meta = nlohmann::json::parse(mf);
    const std::string kind = meta.at("kind").get<std::string>();
    const int rows = meta.at("rows").get<int>();
    const int cols = meta.at("cols").get<int>();
    const int labels = meta.at("labels").get<int>();
    Dataset data;
    data.labels = labels;
    data.du = meta.at("du").get<int>();
    data.dv = meta.at("dv").get<int>();
    const size_t count = meta.at("instances").get<size_t>();

    Graph proto = kind == "grid" ? Graph::grid(rows, cols, labels)
                                 : Graph::chain(cols, labels);

    auto read_all = [&](const std::string& name) {
        std::ifstream f(dir + "/" + name);
        if (!f) throw std::runtime_error("cannot read " + dir + "/" + name);
        std::vector<double> vals;
        std::string line, cell;
        while (std::getline(f, line)) {
            std::stringstream ss(line);
            while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        }
        return vals;
    };
    std::vector<double> uf = read_all("features_unary.csv");
    std::vector<double> ef = read_all("features_edge.csv");
    std::vector<Labeling> labels_rows = load_labelings_csv(dir + "/labels.csv");

    const size_t upi = static_cast<size_t>(proto.node_count()) * data.du;
    const size_t epi = static_cast<size_t>(proto.edge_count()) * data.dv;
    if (uf.size() != upi * count || ef.size() != epi * count ||
        labels_rows.size() != count)
        throw std::runtime_error("dataset files inconsistent with meta.json");
    for (size_t k = 0; k < count; ++k) {
        Instance inst{proto, {}, {}, labels_rows[k]};
        inst.ufeat.assign(uf.begin() + k * upi, uf.begin() + (k + 1) * upi);
        inst.efeat.assign(ef.begin() + k * epi, ef.begin() + (k + 1) * epi);
        data.instances.push_back(std::move(inst));
    }
    return data;
}

std::vector<int> read_pgm(const std::string& path, int& rows, int& cols) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    auto next_token = [&] {
        std::string tok;
        while (f >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(f, rest);
                continue;
            }
            return tok;
        }
        throw std::runtime_error("truncated PGM header: " + path);
    };
    if (next_token() != "P5") throw std::runtime_error("not a P5 PGM: " + path);
    cols = std::stoi(next_token());
    rows = std::stoi(next_token());
    int maxval = std::stoi(next_token());
    if (maxval <= 0 || maxval > 255)
        throw std::runtime_error("unsupported PGM maxval: " + path);
    f.get();  // single whitespace after maxval
    std::vector<int> img(static_cast<size_t>(rows) * cols);
    for (int& v : img) {
        int c = f.get();
        if (c == EOF) throw std::runtime_error("truncated PGM data: " + path);
        v = c;
    }
    return img;
}

}  // namespace gmlearn
