#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "coopnav/probe.hpp"

using namespace coopnav;

namespace {

EpisodeRecord blank_episode(int h1 = 4, int h2 = 4) {
    EpisodeRecord e;
    e.hidden1 = h1;
    e.hidden2 = h2;
    e.data.assign(std::size_t(kHorizon) * kNumAgents * (kObservationDim + h1 + h2 + kActionDim),
                  0.0f);
    return e;
}

// synthetic gaussian-blob dataset with class centers spread apart
ProbeDataset blob_dataset(Rng& rng, int n, int dim, double spread, double noise) {
    ProbeDataset d;
    d.features = Matrix(n, dim);
    d.labels.resize(std::size_t(n));
    std::vector<std::vector<double>> centers(3, std::vector<double>(dim));
    for (auto& c : centers)
        for (double& v : c) v = spread * rng.uniform(-1, 1);
    for (int i = 0; i < n; ++i) {
        int label = i % 3;
        d.labels[std::size_t(i)] = label;
        for (int c = 0; c < dim; ++c)
            d.features(i, c) = centers[std::size_t(label)][std::size_t(c)] + noise * rng.normal();
    }
    for (int i = 0; i < n; ++i) {
        if (i < n * 3 / 4)
            d.train_idx.push_back(std::size_t(i));
        else
            d.test_idx.push_back(std::size_t(i));
    }
    return d;
}

}  // namespace

TEST_CASE("final landmark label: exact hit, tie-break, brute-force agreement", "[probe]") {
    EpisodeRecord e = blank_episode();
    e.landmarks = {Vec2{0, 0}, Vec2{1, 0}, Vec2{0, 1}};

    e.final_positions[0] = {1, 0};  // exactly on landmark 1
    REQUIRE(final_landmark_label(e, 0) == 1);

    e.final_positions[1] = {0.5, 0.5};  // equidistant from 1 and 2 (and farther from 0? no: d0=0.707, d1=0.707, d2=0.707)
    REQUIRE(final_landmark_label(e, 1) == 0);

    Rng rng(61);
    for (int t = 0; t < 500; ++t) {
        for (auto& lm : e.landmarks) lm = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        e.final_positions[2] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        int got = final_landmark_label(e, 2);
        double dg = distance(e.landmarks[got], e.final_positions[2]);
        for (int l = 0; l < kNumLandmarks; ++l) {
            double dl = distance(e.landmarks[l], e.final_positions[2]);
            REQUIRE(dg <= dl);
            if (dl == dg) REQUIRE(got <= l);
        }
    }
}

TEST_CASE("build_dataset: episode rows, 75/25 split, determinism", "[probe]") {
    RecordData rd;
    rd.header.hidden1 = 4;
    rd.header.hidden2 = 4;
    Rng rng(62);
    for (int i = 0; i < 40; ++i) {
        EpisodeRecord e = blank_episode();
        e.episode_index = i;
        for (auto& lm : e.landmarks) lm = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        for (auto& fp : e.final_positions) fp = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        for (float& v : e.data) v = float(rng.uniform(0, 1));
        rd.episodes.push_back(e);
    }

    Rng s1(63);
    ProbeDataset d = build_dataset(rd, 1, 2, FeatureSource::Hidden1, 5, s1);
    REQUIRE(d.features.rows == 40);
    REQUIRE(d.features.cols == 4);
    REQUIRE(d.train_idx.size() == 30);
    REQUIRE(d.test_idx.size() == 10);
    std::set<std::size_t> all(d.train_idx.begin(), d.train_idx.end());
    all.insert(d.test_idx.begin(), d.test_idx.end());
    REQUIRE(all.size() == 40);

    Rng s2(63);
    ProbeDataset d2 = build_dataset(rd, 1, 2, FeatureSource::Hidden1, 5, s2);
    REQUIRE(d.train_idx == d2.train_idx);
    REQUIRE(d.test_idx == d2.test_idx);

    // labels follow the target agent, features the predictor
    Rng s3(63);
    ProbeDataset d3 = build_dataset(rd, 1, 0, FeatureSource::Hidden1, 5, s3);
    bool any_label_diff = false;
    for (std::size_t i = 0; i < d.labels.size(); ++i)
        if (d.labels[i] != d3.labels[i]) any_label_diff = true;
    REQUIRE(any_label_diff);
    REQUIRE(d.features.data == d3.features.data);

    // observation source picks up the 14-wide vector
    Rng s4(63);
    REQUIRE(build_dataset(rd, 0, 0, FeatureSource::Observation, 0, s4).features.cols == 14);
    Rng s5(63);
    REQUIRE(build_dataset(rd, 0, 0, FeatureSource::Action, 24, s5).features.cols == 5);
}

TEST_CASE("probe reaches full accuracy on well-separated blobs", "[probe]") {
    Rng rng(64);
    ProbeDataset d = blob_dataset(rng, 300, 6, 10.0, 0.3);
    ProbeFit fit = train_probe(d);
    REQUIRE_FALSE(fit.model.degenerate);
    REQUIRE(fit.test_accuracy == 1.0);
}

TEST_CASE("probe on pure-noise features sits at chance", "[probe]") {
    Rng rng(65);
    ProbeDataset d = blob_dataset(rng, 3000, 10, 0.0, 1.0);  // identical centers: labels carry no signal
    ProbeFit fit = train_probe(d);
    REQUIRE(fit.test_accuracy >= 1.0 / 3 - 0.05);
    REQUIRE(fit.test_accuracy <= 1.0 / 3 + 0.05);
}

TEST_CASE("row duplication leaves the fitted decision function unchanged", "[probe]") {
    Rng rng(66);
    ProbeDataset d = blob_dataset(rng, 240, 5, 2.0, 1.0);
    ProbeFit base = train_probe(d);

    ProbeDataset dup;
    dup.features = Matrix(d.features.rows * 2, d.features.cols);
    for (int r = 0; r < d.features.rows; ++r)
        for (int pass = 0; pass < 2; ++pass)
            for (int c = 0; c < d.features.cols; ++c)
                dup.features(pass * d.features.rows + r, c) = d.features(r, c);
    dup.labels = d.labels;
    dup.labels.insert(dup.labels.end(), d.labels.begin(), d.labels.end());
    for (std::size_t i : d.train_idx) {
        dup.train_idx.push_back(i);
        dup.train_idx.push_back(i + std::size_t(d.features.rows));
    }
    for (std::size_t i : d.test_idx) {
        dup.test_idx.push_back(i);
        dup.test_idx.push_back(i + std::size_t(d.features.rows));
    }
    ProbeFit doubled = train_probe(dup);
    REQUIRE(doubled.test_accuracy == Catch::Approx(base.test_accuracy).margin(1e-12));
    for (std::size_t i = 0; i < base.model.weights.data.size(); ++i)
        REQUIRE(doubled.model.weights.data[i] ==
                Catch::Approx(base.model.weights.data[i]).margin(1e-6));
}

TEST_CASE("invertible feature re-mix leaves accuracy essentially unchanged", "[probe]") {
    Rng rng(67);
    ProbeDataset d = blob_dataset(rng, 400, 6, 3.0, 1.5);
    double base = train_probe(d).test_accuracy;

    // well-conditioned random mix: identity plus a small dense perturbation
    int dim = d.features.cols;
    Matrix mix(dim, dim);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) mix(r, c) = (r == c ? 1.0 : 0.0) + 0.2 * rng.uniform(-1, 1);
    ProbeDataset mixed = d;
    matmul_nt(d.features, mix, mixed.features);
    double remixed = train_probe(mixed).test_accuracy;
    REQUIRE(std::abs(base - remixed) <= 0.02);
}

TEST_CASE("single-class training data falls back to the flagged majority model", "[probe]") {
    Rng rng(68);
    ProbeDataset d = blob_dataset(rng, 100, 4, 1.0, 1.0);
    for (int& l : d.labels) l = 2;
    ProbeFit fit = train_probe(d);
    REQUIRE(fit.model.degenerate);
    REQUIRE(fit.test_accuracy == 1.0);
    std::vector<double> x(4, 0.5);
    REQUIRE(probe_predict(fit.model, x) == 2);
}

TEST_CASE("probe scores form a probability distribution", "[probe]") {
    Rng rng(69);
    ProbeDataset d = blob_dataset(rng, 150, 7, 2.0, 1.0);
    ProbeModel m = train_probe(d).model;
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x(7);
        for (double& v : x) v = rng.uniform(-20, 20);
        auto p = probe_scores(m, x);
        double sum = 0;
        for (double v : p) {
            REQUIRE(v >= 0.0);
            sum += v;
        }
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("probe training is deterministic", "[probe]") {
    Rng r1(70), r2(70);
    ProbeDataset a = blob_dataset(r1, 200, 5, 2.0, 1.0);
    ProbeDataset b = blob_dataset(r2, 200, 5, 2.0, 1.0);
    ProbeFit fa = train_probe(a), fb = train_probe(b);
    REQUIRE(fa.test_accuracy == fb.test_accuracy);
    REQUIRE(fa.model.weights.data == fb.model.weights.data);
}

TEST_CASE("accuracy_curves fills every cell and the table round-trips", "[probe]") {
    namespace fs = std::filesystem;
    TrainConfig cfg;
    cfg.hidden1 = 8;
    cfg.hidden2 = 8;
    Rng rng(71);
    TrainedAgents agents = make_agents(cfg, rng);
    fs::path rec = fs::temp_directory_path() / "coopnav_probe_rec.bin";
    write_record_file(rec, agents, 60, 5);
    RecordData rd = load_record_file(rec);

    AccuracyGrid g1 = accuracy_curves(rd, 17);
    AccuracyGrid g2 = accuracy_curves(rd, 17);
    for (int p = 0; p < 3; ++p)
        for (int t = 0; t < 3; ++t)
            for (int s = 0; s < 4; ++s)
                for (int ts = 0; ts < 25; ++ts) {
                    REQUIRE(g1.acc[p][t][s][ts] >= 0.0);
                    REQUIRE(g1.acc[p][t][s][ts] <= 1.0);
                    REQUIRE(g1.acc[p][t][s][ts] == g2.acc[p][t][s][ts]);
                }

    fs::path tsv = fs::temp_directory_path() / "coopnav_probe_acc.tsv";
    write_accuracy_tsv(tsv, g1, {"hash 123"});
    std::ifstream in(tsv);
    std::string line;
    int comments = 0, headers = 0, rows = 0;
    while (std::getline(in, line)) {
        if (line.rfind("# ", 0) == 0)
            ++comments;
        else if (line.rfind("predictor", 0) == 0)
            ++headers;
        else if (!line.empty())
            ++rows;
    }
    REQUIRE(comments == 1);
    REQUIRE(headers == 1);
    REQUIRE(rows == 3 * 3 * 4 * 25);
    fs::remove(rec);
    fs::remove(tsv);
}
