#ifndef GMLEARN_DATA_HPP
#define GMLEARN_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "gmlearn/model_io.hpp"
#include "gmlearn/trainer.hpp"

namespace gmlearn {

/// Ladder source model: a hidden chain x paired with an observed chain y,
/// rung edges x_i - y_i. Samples are drawn by Gibbs sampling and the x layer
/// is circularly shifted afterwards, so nonzero shifts mis-specify any model
/// that pairs x_i with y_i.
struct ChainGenConfig {
    int n = 20;
    std::uint64_t seed = 0;
    int shift = 0;  // 0 <= shift < n acts on the x layer
    int samples = 100;
    int gibbs_sweeps = 2000;
};

struct ChainData {
    Model model;                    // ladder over (x, y); x nodes 0..n-1
    std::vector<Labeling> samples;  // full 2n states, shift already applied
};

ChainData gen_chain_model(const ChainGenConfig& config);

/// Conditional chain over x given y: per-node feature block (1, y_i) and a
/// one-hot per-edge block, so node and edge parameters are untied.
Dataset chain_to_dataset(int n, const std::vector<Labeling>& samples);

/// Circular shift of the x layer of ladder samples (nodes 0..n-1).
std::vector<Labeling> shift_x_layer(const std::vector<Labeling>& samples, int n,
                                    int shift);

struct DenoiseConfig {
    int rows = 32;
    int cols = 32;
    int train = 8;
    int test = 4;
    double noise = 1.25;  // > 1; lower is noisier
    std::uint64_t seed = 0;
};

struct DenoisePair {
    Dataset train;
    Dataset test;
};

/// Binary blob images (thresholded smoothed noise) pushed through the noise
/// channel y = x (1 - t^n) + (1 - x) t^n with t uniform on [0, 1].
/// Unary features are (1, y_i); edge features mark horizontal and vertical.
DenoisePair gen_denoise(const DenoiseConfig& config);

/// Denoising instance for a user-supplied binary image (row-major 0/1).
Instance denoise_instance(const std::vector<int>& image, int rows, int cols,
                          double noise, std::uint64_t seed);

/// Sinusoidal basis: sin(c . s) for every binary vector c in counting order,
/// then cos(c . s); 2 * 2^d outputs for a d-dim input.
std::vector<double> sinusoidal_expand(const std::vector<double>& s);

/// Dataset directory: features_unary.csv (instance*node rows), features_edge.csv
/// (instance*edge rows), labels.csv, meta.json.
void save_dataset(const std::string& dir, const Dataset& data,
                  const std::string& graph_kind, int rows, int cols,
                  std::uint64_t seed);
Dataset load_dataset(const std::string& dir);

/// Binary (P5) PGM; returns row-major gray values in [0, 255].
std::vector<int> read_pgm(const std::string& path, int& rows, int& cols);

}  // namespace gmlearn

#endif
