#include "squanv/checkpoint.hpp"
#include "squanv/error.hpp"
#include "squanv/random.hpp"
#include "squanv/train.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

using namespace squanv;
namespace fs = std::filesystem;
using Catch::Matchers::WithinAbs;

namespace {

ImageDataset constant_images(int count, int hw, int classes) {
    ImageDataset d;
    d.count = count;
    d.height = hw;
    d.width = hw;
    d.split = "train";
    for (int i = 0; i < count; ++i) {
        const int y = i % classes;
        d.labels.push_back(y);
        for (int k = 0; k < hw * hw; ++k) d.pixels.push_back(0.2 + 0.6 * y / (classes - 1));
    }
    return d;
}

ImageDataset noisy_images(int count, int hw, int classes, std::uint64_t seed) {
    Rng rng(seed);
    ImageDataset d;
    d.count = count;
    d.height = hw;
    d.width = hw;
    for (int i = 0; i < count; ++i) {
        d.labels.push_back(i % classes);
        for (int k = 0; k < hw * hw; ++k) d.pixels.push_back(rng.uniform());
    }
    return d;
}

ModelSpec spec_for(const ImageDataset &d, int nf, int classes) {
    ModelSpec s;
    s.image_h = d.height;
    s.image_w = d.width;
    s.n_blocks = 2;
    s.n_filters = nf;
    s.classes = classes;
    return s;
}

struct ThreadEnv {
    explicit ThreadEnv(const char *n) { setenv("SQUANV_THREADS", n, 1); }
    ~ThreadEnv() { unsetenv("SQUANV_THREADS"); }
};

} // namespace

TEST_CASE("adam with zero gradient only decays the moments", "[train][adam]") {
    std::vector<double> p{0.5, -1.0};
    const std::vector<double> g{0.0, 0.0};
    AdamMoments mom(2);
    mom.m = {0.2, -0.4};
    mom.v = {0.01, 0.04};
    adam_step(p, g, mom, {}, 3);
    CHECK_THAT(mom.m[0], WithinAbs(0.18, 1e-15));
    CHECK_THAT(mom.v[1], WithinAbs(0.04 * 0.999, 1e-15));

    std::vector<double> q{0.5, -1.0};
    AdamMoments fresh(2);
    adam_step(q, g, fresh, {}, 1);
    CHECK(q == std::vector<double>{0.5, -1.0});
}

TEST_CASE("adam first step moves by the learning rate", "[train][adam]") {
    std::vector<double> p{1.0, 1.0, 1.0};
    const std::vector<double> g{3.0, -0.01, 250.0};
    AdamMoments mom(3);
    const AdamHyper h{1e-3, 0.9, 0.999, 1e-8};
    adam_step(p, g, mom, h, 1);
    CHECK_THAT(p[0], WithinAbs(1.0 - 1e-3, 1e-10));
    CHECK_THAT(p[1], WithinAbs(1.0 + 1e-3, 1e-9));
    CHECK_THAT(p[2], WithinAbs(1.0 - 1e-3, 1e-10));
}

TEST_CASE("adam step size under a constant gradient tends to the learning rate",
          "[train][adam][property]") {
    const double g = GENERATE(1e-3, 0.7, 40.0);
    std::vector<double> p{0.0};
    AdamMoments mom(1);
    const AdamHyper h{0.01, 0.9, 0.999, 1e-8};
    double prev = 0.0;
    for (long t = 1; t <= 5000; ++t) {
        adam_step(p, std::vector<double>{g}, mom, h, t);
        const double step = prev - p[0];
        REQUIRE(step > 0.0);
        REQUIRE(step <= h.learning_rate * (1 + 1e-9));
        prev = p[0];
        if (t == 5000) CHECK_THAT(step, WithinAbs(h.learning_rate, 1e-6));
    }
    CHECK_THROWS_AS(adam_step(p, std::vector<double>{g, g}, mom, h, 1), ConfigError);
}

TEST_CASE("train config invariants", "[train]") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate(1));
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(2), ConfigError);
    c = {};
    c.lambda = 0.5;
    CHECK_THROWS_AS(c.validate(1), ConfigError);
    CHECK_NOTHROW(c.validate(2));
    c.lambda = -0.1;
    CHECK_THROWS_AS(c.validate(2), ConfigError);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(2), ConfigError);
    c = {};
    c.beta2 = 1.0;
    CHECK_THROWS_AS(c.validate(2), ConfigError);
}

TEST_CASE("two constant images are separated", "[train]") {
    const auto d = constant_images(40, 6, 2);
    auto state = TrainState::fresh(SqcnnModel::create(spec_for(d, 1, 2), 3));
    TrainConfig c;
    c.epochs = 30;
    c.learning_rate = 1e-2;
    const auto m = rf_train(c, d, d, state);
    REQUIRE(m.epochs.size() == 30);
    CHECK(m.epochs.back().top1_train == 100.0);
    CHECK(std::isnan(m.epochs.back().feat_euclid_dist));
    CHECK(m.epochs.back().loss_rf == 0.0);
    CHECK(m.epochs.back().loss_total < m.epochs.front().loss_total);
}

TEST_CASE("training is deterministic across worker counts", "[train][determinism]") {
    const auto train = noisy_images(24, 6, 3, 1);
    const auto test = noisy_images(9, 6, 3, 2);
    const auto spec = spec_for(train, 2, 3);
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 5;
    c.lambda = 0.5;
    c.learning_rate = 1e-2;
    c.seed = 17;

    const auto run = [&](const char *threads) {
        ThreadEnv env(threads);
        auto state = TrainState::fresh(SqcnnModel::create(spec, 4));
        auto m = rf_train(c, train, test, state);
        return std::pair{m, state.model.bank.params};
    };
    const auto [m1, p1] = run("1");
    const auto [m2, p2] = run("1");
    const auto [m3, p3] = run("3");
    CHECK(m1.epochs == m2.epochs);
    CHECK(m1.epochs == m3.epochs);
    CHECK(p1 == p3);

    auto other = c;
    other.seed = 18;
    auto state = TrainState::fresh(SqcnnModel::create(spec, 4));
    CHECK(rf_train(other, train, test, state).epochs != m1.epochs);
}

TEST_CASE("reported batch loss matches an independent recomputation", "[train]") {
    const auto train = noisy_images(12, 6, 3, 5);
    const auto spec = spec_for(train, 3, 3);
    TrainConfig c;
    c.epochs = 1;
    c.batch_size = 4;
    c.lambda = 0.1;
    c.rf_patch_samples = 2;
    int steps = 0;
    auto state = TrainState::fresh(SqcnnModel::create(spec, 6));
    rf_train(c, train, train, state, {}, [&](const StepRecord &rec, const TrainState &s) {
        double ce = 0.0;
        double rf = 0.0;
        for (std::size_t b = 0; b < rec.batch.size(); ++b) {
            REQUIRE(rec.rf_patches[b].size() == 2);
            REQUIRE(rec.rf_patches[b][0] != rec.rf_patches[b][1]);
            LossOptions opt;
            opt.lambda = c.lambda;
            opt.rf_patches = rec.rf_patches[b];
            const int idx = rec.batch[b];
            const auto l = example_loss(s.model, train.image(idx), train.labels[idx], opt);
            ce += l.ce;
            rf += l.rf;
        }
        const double n = static_cast<double>(rec.batch.size());
        CHECK_THAT(rec.loss.total, WithinAbs(ce / n + c.lambda * (rf / n), 1e-10));
        ++steps;
    });
    CHECK(steps == 3);
}

TEST_CASE("divergence is reported", "[train]") {
    auto train = noisy_images(4, 6, 2, 7);
    auto state = TrainState::fresh(SqcnnModel::create(spec_for(train, 1, 2), 1));
    state.model.head.bias[0] = std::numeric_limits<double>::infinity();
    TrainConfig c;
    c.epochs = 1;
    CHECK_THROWS_AS(rf_train(c, train, train, state), DivergenceError);
}

TEST_CASE("top1 accuracy on controlled heads", "[train]") {
    const auto d = noisy_images(20, 6, 10, 8);
    auto model = SqcnnModel::create(spec_for(d, 2, 10), 1);
    std::fill(model.head.weights.begin(), model.head.weights.end(), 0.0);
    std::fill(model.head.bias.begin(), model.head.bias.end(), 0.0);
    model.head.bias[4] = 1.0;
    CHECK(top1_accuracy(model, d) == 10.0);

    auto two = noisy_images(8, 6, 2, 9);
    two.labels = {1, 1, 1, 0, 1, 1, 0, 1};
    auto m2 = SqcnnModel::create(spec_for(two, 2, 2), 1);
    std::fill(m2.head.weights.begin(), m2.head.weights.end(), 0.0);
    m2.head.bias = {0.0, 2.0};
    CHECK(top1_accuracy(m2, two) == 75.0);
    two.labels = {1, 1, 1, 1, 1, 1, 1, 1};
    CHECK(top1_accuracy(m2, two) == 100.0);
}

TEST_CASE("feature distance", "[train]") {
    const auto d = noisy_images(5, 6, 2, 10);
    auto model = SqcnnModel::create(spec_for(d, 3, 2), 2);

    // Recompute from raw feature maps.
    const int nq = model.spec.n_qubits;
    double expect = 0.0;
    for (int i = 0; i < d.count; ++i) {
        const auto grid = extract_patches(d.image(i), 2, 2, 2);
        const auto f = forward(model.bank, grid, false).features;
        const std::size_t n = static_cast<std::size_t>(nq) * grid.count();
        double acc = 0.0;
        for (int a = 0; a < 3; ++a)
            for (int b = a + 1; b < 3; ++b) {
                double s = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double diff = f.values[a * n + k] - f.values[b * n + k];
                    s += diff * diff;
                }
                acc += std::sqrt(s / static_cast<double>(n));
            }
        expect += acc / 3.0;
    }
    expect /= d.count;
    CHECK_THAT(feature_euclid_distance(model, d), WithinAbs(expect, 1e-12));

    model.bank.params[1] = model.bank.params[0];
    model.bank.params[2] = model.bank.params[0];
    CHECK(feature_euclid_distance(model, d) == 0.0);

    auto single = SqcnnModel::create(spec_for(d, 1, 2), 2);
    CHECK_THROWS_AS(feature_euclid_distance(single, d), ConfigError);
    CHECK(std::isnan(score_split(single, d).feat_euclid_dist));
}

TEST_CASE("feature distance reaches 2 for opposite constant maps", "[train]") {
    // With zero pixels and zero angles every qubit reads +1. Searching the
    // subsets of RX(pi) flips before the CNOT ring finds one that lands on
    // |1111>, which reads -1 on every qubit.
    ImageDataset d;
    d.count = 1;
    d.height = 4;
    d.width = 4;
    d.pixels.assign(16, 0.0);
    d.labels = {0};
    ModelSpec s = spec_for(d, 2, 2);
    s.n_blocks = 1;
    auto model = SqcnnModel::create(s, 1);
    for (auto &p : model.bank.params) std::fill(p.begin(), p.end(), 0.0);
    const auto &tmpl = model.bank.tmpl;
    const std::vector<double> patch(4, 0.0);

    bool found = false;
    for (int mask = 0; mask < 16 && !found; ++mask) {
        ParamVector p(static_cast<std::size_t>(tmpl.n_params()), 0.0);
        for (int j = 0; j < tmpl.n_params(); ++j) {
            const auto &op = tmpl.ops()[tmpl.param_op(j)];
            if (op.type == GateType::RX && ((mask >> op.target) & 1))
                p[static_cast<std::size_t>(j)] = std::numbers::pi;
        }
        const auto f = evaluate(tmpl, p, patch).features;
        if (std::all_of(f.begin(), f.end(), [](double z) { return z < -1 + 1e-12; })) {
            model.bank.params[1] = p;
            found = true;
        }
    }
    REQUIRE(found);
    CHECK_THAT(feature_euclid_distance(model, d), WithinAbs(2.0, 1e-12));
}

TEST_CASE("checkpoint round trip", "[train][checkpoint]") {
    const fs::path dir = fs::temp_directory_path() / "squanv_ckpt_test";
    fs::create_directories(dir);
    const auto train = noisy_images(10, 6, 2, 11);
    const auto spec = spec_for(train, 2, 2);
    TrainConfig c;
    c.epochs = 1;
    c.batch_size = 4;
    c.lambda = 0.5;
    c.learning_rate = 1e-2;

    auto state = TrainState::fresh(SqcnnModel::create(spec, 12));
    rf_train(c, train, train, state);
    const nlohmann::json config{{"note", "x"}, {"lr", 0.1 + 0.2}};
    save_checkpoint(dir / "a.json", config, state);
    const auto back = load_checkpoint(dir / "a.json");
    CHECK(back.config == config);
    CHECK(back.state.model.spec == spec);
    CHECK(back.state.model.bank.params == state.model.bank.params);
    CHECK(back.state.model.head.weights == state.model.head.weights);
    CHECK(back.state.model.head.bias == state.model.head.bias);
    CHECK(back.state.step == state.step);
    CHECK(back.state.epoch == 1);
    for (std::size_t k = 0; k < state.moments.size(); ++k) {
        CHECK(back.state.moments[k].m == state.moments[k].m);
        CHECK(back.state.moments[k].v == state.moments[k].v);
    }
    const auto img = train.image(3);
    CHECK(predict(back.state.model, img) == predict(state.model, img));

    // Resuming from the checkpoint continues the run exactly.
    auto resumed = back.state;
    const auto m_resumed = rf_train(c, train, train, resumed);
    auto straight = TrainState::fresh(SqcnnModel::create(spec, 12));
    auto c2 = c;
    c2.epochs = 2;
    const auto m_straight = rf_train(c2, train, train, straight);
    CHECK(m_resumed.epochs.front() == m_straight.epochs.back());

    SECTION("corrupt file") {
        std::ofstream(dir / "bad.json") << "{\"format\": \"squanv-checkpoint\", \"version\": 1, ";
        CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), IngestError);
    }
    SECTION("inconsistent shapes") {
        auto j = nlohmann::json::parse(std::ifstream(dir / "a.json"));
        j["filters"][0].erase(0);
        std::ofstream(dir / "short.json") << j.dump();
        CHECK_THROWS_AS(load_checkpoint(dir / "short.json"), IngestError);
    }
    SECTION("future version") {
        auto j = nlohmann::json::parse(std::ifstream(dir / "a.json"));
        j["version"] = kCheckpointVersion + 1;
        std::ofstream(dir / "new.json") << j.dump();
        CHECK_THROWS_AS(load_checkpoint(dir / "new.json"), IngestError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_checkpoint(dir / "absent.json"), IngestError);
    }
    fs::remove_all(dir);
}
