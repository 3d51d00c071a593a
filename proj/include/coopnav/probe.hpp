#pragma once

// Per-timestep linear softmax probes: predict an agent's final landmark from
// another agent's observation, hidden activations, or action.

#include <filesystem>
#include <fstream>
#include <numeric>

#include "coopnav/mlp.hpp"
#include "coopnav/recorder.hpp"

namespace coopnav {

enum class FeatureSource { Observation, Hidden1, Hidden2, Action };
inline constexpr int kNumFeatureSources = 4;
inline constexpr std::array<FeatureSource, kNumFeatureSources> kAllFeatureSources = {
    FeatureSource::Observation, FeatureSource::Hidden1, FeatureSource::Hidden2,
    FeatureSource::Action};

inline std::string to_string(FeatureSource s) {
    switch (s) {
        case FeatureSource::Observation: return "obs";
        case FeatureSource::Hidden1: return "h1";
        case FeatureSource::Hidden2: return "h2";
        case FeatureSource::Action: return "action";
    }
    throw std::logic_error("to_string: bad feature source");
}

/// Landmark nearest to the agent's final position; ties break low.
inline int final_landmark_label(const EpisodeRecord& e, int agent) {
    if (agent < 0 || agent >= kNumAgents) throw std::out_of_range("final_landmark_label: agent");
    int best = 0;
    double best_d = distance(e.landmarks[0], e.final_positions[agent]);
    for (int l = 1; l < kNumLandmarks; ++l) {
        double d = distance(e.landmarks[l], e.final_positions[agent]);
        if (d < best_d) {
            best_d = d;
            best = l;
        }
    }
    return best;
}

struct ProbeDataset {
    Matrix features;              // N x d
    std::vector<int> labels;      // N, in {0,1,2}
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
};

/// One row per episode; episode-level 75/25 split drawn from `split_rng`
/// (a fixed generator state reproduces the same partition).
inline ProbeDataset build_dataset(const RecordData& records, int predictor, int target,
                                  FeatureSource source, int timestep, Rng& split_rng) {
    if (records.episodes.empty()) throw std::invalid_argument("build_dataset: no episodes");
    if (predictor < 0 || predictor >= kNumAgents || target < 0 || target >= kNumAgents)
        throw std::out_of_range("build_dataset: agent index");
    if (timestep < 0 || timestep >= kHorizon) throw std::out_of_range("build_dataset: timestep");

    const std::size_t n = records.episodes.size();
    auto view = [&](const EpisodeRecord& e) {
        switch (source) {
            case FeatureSource::Observation: return e.obs(timestep, predictor);
            case FeatureSource::Hidden1: return e.h1(timestep, predictor);
            case FeatureSource::Hidden2: return e.h2(timestep, predictor);
            case FeatureSource::Action: return e.action(timestep, predictor);
        }
        throw std::logic_error("build_dataset: bad source");
    };

    ProbeDataset d;
    const int dim = int(view(records.episodes[0]).size());
    d.features = Matrix(int(n), dim);
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto f = view(records.episodes[i]);
        for (int c = 0; c < dim; ++c) d.features(int(i), c) = double(f[c]);
        d.labels[i] = final_landmark_label(records.episodes[i], target);
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = split_rng.index(i + 1);
        std::swap(order[i], order[j]);
    }
    std::size_t n_test = n / 4;
    d.train_idx.assign(order.begin(), order.end() - std::ptrdiff_t(n_test));
    d.test_idx.assign(order.end() - std::ptrdiff_t(n_test), order.end());
    return d;
}

/// Linear softmax over raw features (standardization is folded into the
/// parameters after fitting).
struct ProbeModel {
    Matrix weights;  // 3 x d
    std::array<double, kNumLandmarks> bias{};
    bool degenerate = false;  // single-class training data: majority fallback
};

inline std::array<double, kNumLandmarks> probe_scores(const ProbeModel& m,
                                                      std::span<const double> x) {
    if (int(x.size()) != m.weights.cols) throw std::invalid_argument("probe_scores: feature size");
    std::array<double, kNumLandmarks> z{};
    for (int k = 0; k < kNumLandmarks; ++k) {
        double s = m.bias[k];
        for (int c = 0; c < m.weights.cols; ++c) s += m.weights(k, c) * x[c];
        z[k] = s;
    }
    double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (double& v : z) v /= sum;
    return z;
}

inline int probe_predict(const ProbeModel& m, std::span<const double> x) {
    auto p = probe_scores(m, x);
    int best = 0;
    for (int k = 1; k < kNumLandmarks; ++k)
        if (p[k] > p[best]) best = k;
    return best;
}

struct ProbeFit {
    ProbeModel model;
    double test_accuracy = 0;
};

inline constexpr double kProbeL2 = 1e-3;
inline constexpr double kProbeGradTol = 1e-5;
inline constexpr int kProbeMaxIters = 2000;

/// Multinomial logistic regression: features standardized on the train split,
/// full-batch gradient descent with a 1/L step (L from a power-iteration
/// spectral bound), ridge penalty kProbeL2 * ||W||^2 on weights only, stopping
/// at gradient norm < kProbeGradTol or kProbeMaxIters.
inline ProbeFit train_probe(const ProbeDataset& d) {
    const int dim = d.features.cols;
    const std::size_t n_train = d.train_idx.size();
    if (n_train == 0) throw std::invalid_argument("train_probe: empty training split");

    std::array<long, kNumLandmarks> counts{};
    for (std::size_t i : d.train_idx) counts[std::size_t(d.labels[i])]++;
    int present = 0;
    for (long c : counts) present += c > 0 ? 1 : 0;

    ProbeFit fit;
    if (present < 2) {
        int majority = int(std::max_element(counts.begin(), counts.end()) - counts.begin());
        fit.model.weights = Matrix(kNumLandmarks, dim);
        fit.model.bias[std::size_t(majority)] = 1.0;
        fit.model.degenerate = true;
        long hit = 0;
        for (std::size_t i : d.test_idx)
            if (d.labels[i] == majority) ++hit;
        fit.test_accuracy = d.test_idx.empty() ? 0.0 : double(hit) / double(d.test_idx.size());
        return fit;
    }

    // standardization statistics from the train split
    std::vector<double> mean(dim, 0.0), inv_std(dim, 1.0);
    for (std::size_t i : d.train_idx)
        for (int c = 0; c < dim; ++c) mean[c] += d.features(int(i), c);
    for (double& m : mean) m /= double(n_train);
    std::vector<double> var(dim, 0.0);
    for (std::size_t i : d.train_idx)
        for (int c = 0; c < dim; ++c) {
            double v = d.features(int(i), c) - mean[c];
            var[c] += v * v;
        }
    for (int c = 0; c < dim; ++c) {
        double sd = std::sqrt(var[c] / double(n_train));
        inv_std[c] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }

    Matrix x(int(n_train), dim);
    for (std::size_t r = 0; r < n_train; ++r)
        for (int c = 0; c < dim; ++c)
            x(int(r), c) = (d.features(int(d.train_idx[r]), c) - mean[c]) * inv_std[c];

    // Lipschitz bound: 0.5 * lambda_max((X^T X)/N + bias direction) + ridge
    Matrix cov;
    matmul_tn(x, x, cov);
    for (double& v : cov.data) v /= double(n_train);
    std::vector<double> v(dim, 1.0 / std::sqrt(double(dim))), w(dim);
    double lmax = 1.0;
    for (int it = 0; it < 100; ++it) {
        for (int r = 0; r < dim; ++r) {
            double s = 0;
            for (int c = 0; c < dim; ++c) s += cov(r, c) * v[c];
            w[r] = s;
        }
        double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
        if (norm < 1e-300) break;
        lmax = norm;
        for (int r = 0; r < dim; ++r) v[r] = w[r] / norm;
    }
    const double step = 1.0 / (0.5 * (lmax + 1.0) + 2.0 * kProbeL2);

    Matrix W(kNumLandmarks, dim);
    std::array<double, kNumLandmarks> b{};
    Matrix logits, G(int(n_train), kNumLandmarks), gradW;
    for (int iter = 0; iter < kProbeMaxIters; ++iter) {
        matmul_nt(x, W, logits);
        for (std::size_t r = 0; r < n_train; ++r) {
            double* row = logits.row(int(r));
            for (int k = 0; k < kNumLandmarks; ++k) row[k] += b[k];
            double zmax = *std::max_element(row, row + kNumLandmarks);
            double sum = 0;
            for (int k = 0; k < kNumLandmarks; ++k) {
                row[k] = std::exp(row[k] - zmax);
                sum += row[k];
            }
            int label = d.labels[d.train_idx[r]];
            for (int k = 0; k < kNumLandmarks; ++k)
                G(int(r), k) = (row[k] / sum - (k == label ? 1.0 : 0.0)) / double(n_train);
        }
        matmul_tn(G, x, gradW);  // 3 x d
        for (int k = 0; k < kNumLandmarks; ++k)
            for (int c = 0; c < dim; ++c) gradW(k, c) += 2.0 * kProbeL2 * W(k, c);
        std::array<double, kNumLandmarks> gradb{};
        for (std::size_t r = 0; r < n_train; ++r)
            for (int k = 0; k < kNumLandmarks; ++k) gradb[k] += G(int(r), k);

        double sq = 0;
        for (double g : gradW.data) sq += g * g;
        for (double g : gradb) sq += g * g;
        if (std::sqrt(sq) < kProbeGradTol) break;

        for (std::size_t i = 0; i < W.data.size(); ++i) W.data[i] -= step * gradW.data[i];
        for (int k = 0; k < kNumLandmarks; ++k) b[k] -= step * gradb[k];
    }

    // fold standardization into the raw-feature parameters
    fit.model.weights = Matrix(kNumLandmarks, dim);
    for (int k = 0; k < kNumLandmarks; ++k) {
        double shift = 0;
        for (int c = 0; c < dim; ++c) {
            fit.model.weights(k, c) = W(k, c) * inv_std[c];
            shift += W(k, c) * inv_std[c] * mean[c];
        }
        fit.model.bias[std::size_t(k)] = b[std::size_t(k)] - shift;
    }

    long hit = 0;
    std::vector<double> row(dim);
    for (std::size_t i : d.test_idx) {
        for (int c = 0; c < dim; ++c) row[c] = d.features(int(i), c);
        if (probe_predict(fit.model, row) == d.labels[i]) ++hit;
    }
    fit.test_accuracy = d.test_idx.empty() ? 0.0 : double(hit) / double(d.test_idx.size());
    return fit;
}

struct AccuracyGrid {
    // [predictor][target][source][timestep]
    double acc[kNumAgents][kNumAgents][kNumFeatureSources][kHorizon]{};
    bool degenerate[kNumAgents][kNumAgents][kNumFeatureSources][kHorizon]{};
};

/// All 3x3x4x25 probe fits. Every cell reuses the same episode split, derived
/// from `split_seed`.
inline AccuracyGrid accuracy_curves(const RecordData& records, std::uint64_t split_seed) {
    AccuracyGrid grid;
    for (int p = 0; p < kNumAgents; ++p)
        for (int t = 0; t < kNumAgents; ++t)
            for (int s = 0; s < kNumFeatureSources; ++s)
                for (int ts = 0; ts < kHorizon; ++ts) {
                    Rng split = Rng::derive(split_seed, "probe-split");
                    ProbeDataset d =
                        build_dataset(records, p, t, kAllFeatureSources[std::size_t(s)], ts, split);
                    ProbeFit fit = train_probe(d);
                    grid.acc[p][t][s][ts] = fit.test_accuracy;
                    grid.degenerate[p][t][s][ts] = fit.model.degenerate;
                }
    return grid;
}

inline void write_accuracy_tsv(const std::filesystem::path& path, const AccuracyGrid& grid,
                               const std::vector<std::string>& comments = {}) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_accuracy_tsv: cannot open " + path.string());
    for (const std::string& c : comments) out << "# " << c << '\n';
    out << "predictor\ttarget\tsource\ttimestep\ttest_accuracy\n";
    char buf[32];
    for (int p = 0; p < kNumAgents; ++p)
        for (int t = 0; t < kNumAgents; ++t)
            for (int s = 0; s < kNumFeatureSources; ++s)
                for (int ts = 0; ts < kHorizon; ++ts) {
                    std::snprintf(buf, sizeof buf, "%.6f", grid.acc[p][t][s][ts]);
                    out << p << '\t' << t << '\t' << to_string(kAllFeatureSources[std::size_t(s)])
                        << '\t' << ts << '\t' << buf << '\n';
                }
    if (!out) throw std::runtime_error("write_accuracy_tsv: write failed");
}

}  // namespace coopnav
