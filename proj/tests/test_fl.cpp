#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fedsim/fl.hpp"

using namespace fedsim;

namespace {

bool same_values(const ModelParams& a, const ModelParams& b) {
    if (a.extractor.size() != b.extractor.size()) return false;
    for (std::size_t l = 0; l < a.extractor.size(); ++l) {
        if (a.extractor[l].weight.values() != b.extractor[l].weight.values())
            return false;
        if (a.extractor[l].bias.values() != b.extractor[l].bias.values()) return false;
    }
    return a.classifier.values() == b.classifier.values();
}

ModelParams linear_model(Tensor classifier, HeadKind head, bool frozen) {
    ModelParams m;
    m.classifier = std::move(classifier);
    m.head = {head, 1.0};
    m.frozen_classifier = frozen;
    return m;
}

Dataset two_class_dataset(std::uint64_t seed) {
    return gen_synthetic(2, 4, 20, 6.0, 0.5, seed);
}

}  // namespace

TEST_CASE("algorithm names round trip") {
    for (Algorithm alg : {Algorithm::FedAVG, Algorithm::FedFN, Algorithm::FedFR,
                          Algorithm::FedBABU, Algorithm::SphereFedCE,
                          Algorithm::SphereFedMSE})
        CHECK(algorithm_from_name(algorithm_name(alg)) == alg);
    CHECK_THROWS_AS(algorithm_from_name("sgd"), config_error);
}

TEST_CASE("config to head/loss/freeze mapping") {
    FLConfig c;
    c.algorithm = Algorithm::FedAVG;
    CHECK(c.head_spec().kind == HeadKind::Standard);
    CHECK(c.loss_spec().kind == LossKind::CrossEntropy);
    CHECK_FALSE(c.frozen_classifier());

    c.algorithm = Algorithm::FedFN;
    CHECK(c.head_spec().kind == HeadKind::NormalizedFeature);
    CHECK_FALSE(c.frozen_classifier());

    c.algorithm = Algorithm::FedFR;
    c.mu = 0.3;
    CHECK(c.head_spec().kind == HeadKind::Standard);
    CHECK(c.loss_spec().kind == LossKind::CrossEntropyPlusFeatureNorm);
    CHECK(c.loss_spec().mu == 0.3);

    c.algorithm = Algorithm::FedBABU;
    CHECK(c.head_spec().kind == HeadKind::Standard);
    CHECK(c.frozen_classifier());

    c.algorithm = Algorithm::SphereFedCE;
    c.tau = 7.5;
    CHECK(c.head_spec().kind == HeadKind::FrozenOrthonormal);
    CHECK(c.head_spec().tau == 7.5);
    CHECK(c.frozen_classifier());

    c.algorithm = Algorithm::SphereFedMSE;
    CHECK(c.loss_spec().kind == LossKind::MseOneHot);
    CHECK(c.frozen_classifier());
}

TEST_CASE("config validation") {
    FLConfig c;
    c.fraction = 0.0;
    CHECK_THROWS_AS(c.validate(), config_error);
    c.fraction = 1.5;
    CHECK_THROWS_AS(c.validate(), config_error);
    c.fraction = 0.25;
    c.tau = 0.0;
    CHECK_THROWS_AS(c.validate(), config_error);
    c.tau = 1.0;
    c.mu = -0.1;
    CHECK_THROWS_AS(c.validate(), config_error);
    c.mu = 0.0;
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("sample_clients") {
    SUBCASE("size, range and uniqueness") {
        for (std::size_t round = 0; round < 30; ++round) {
            auto s = sample_clients(20, 0.25, round, 9);
            CHECK(s.size() == 5);  // ceil(0.25 * 20)
            std::set<std::size_t> uniq(s.begin(), s.end());
            CHECK(uniq.size() == s.size());
            for (auto c : s) CHECK(c < 20);
        }
    }
    SUBCASE("ceil on non-integral products") {
        CHECK(sample_clients(10, 0.25, 0, 1).size() == 3);  // ceil(2.5)
        CHECK(sample_clients(7, 0.5, 0, 1).size() == 4);    // ceil(3.5)
    }
    SUBCASE("fraction one selects everyone") {
        auto s = sample_clients(12, 1.0, 4, 3);
        std::set<std::size_t> uniq(s.begin(), s.end());
        CHECK(uniq.size() == 12);
    }
    SUBCASE("deterministic in (seed, round), varies across rounds") {
        CHECK(sample_clients(50, 0.2, 7, 11) == sample_clients(50, 0.2, 7, 11));
        bool any_diff = false;
        auto base = sample_clients(50, 0.2, 0, 11);
        for (std::size_t r = 1; r < 10; ++r)
            if (sample_clients(50, 0.2, r, 11) != base) any_diff = true;
        CHECK(any_diff);
    }
    SUBCASE("roughly uniform across many rounds") {
        std::vector<std::size_t> hits(10, 0);
        for (std::size_t r = 0; r < 2000; ++r)
            for (auto c : sample_clients(10, 0.3, r, 5)) ++hits[c];
        // expectation 600 per client; allow 15%
        for (auto h : hits) CHECK(std::abs(static_cast<double>(h) - 600.0) < 90.0);
    }
}

TEST_CASE("lr_at_round step decay boundaries") {
    // eta = 0.01, R = 320: decays at rounds 160 and 240 exactly
    CHECK(lr_at_round(0.01, 320, 0) == 0.01);
    CHECK(lr_at_round(0.01, 320, 159) == 0.01);
    CHECK(lr_at_round(0.01, 320, 160) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(lr_at_round(0.01, 320, 239) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(lr_at_round(0.01, 320, 240) == doctest::Approx(0.0001).epsilon(1e-15));
    CHECK(lr_at_round(0.01, 320, 319) == doctest::Approx(0.0001).epsilon(1e-15));
    CHECK_THROWS_AS(lr_at_round(0.01, 320, 320), config_error);
    // odd horizons use integer division
    CHECK(lr_at_round(1.0, 5, 1) == 1.0);
    CHECK(lr_at_round(1.0, 5, 2) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(lr_at_round(1.0, 5, 3) == doctest::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("local_train") {
    Dataset d = two_class_dataset(3);
    std::vector<std::size_t> shard(d.size());
    std::iota(shard.begin(), shard.end(), std::size_t{0});

    SUBCASE("lr zero is the identity") {
        ModelParams m = init_model({4, 6, 4}, 2, {HeadKind::Standard, 1.0}, false, 5);
        ModelParams out = local_train(m, d, shard, {LossKind::CrossEntropy, 0.0}, 3,
                                      8, 0.0, 17);
        CHECK(same_values(m, out));
    }
    SUBCASE("one full-batch step matches the closed-form gradient") {
        // no extractor, normalized-feature head: the classifier update is
        // exactly -lr * mean_i (softmax(z_hat_i) - onehot(y_i)) f_hat_i^T
        ModelParams m = linear_model(
            Tensor({2, 4}, {0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.0, 0.6}),
            HeadKind::NormalizedFeature, false);
        const double lr = 0.25;
        ModelParams out = local_train(m, d, shard, {LossKind::CrossEntropy, 0.0}, 1,
                                      d.size(), lr, 23);
        std::vector<double> mean_grad(8, 0.0);
        for (std::size_t idx : shard) {
            Tensor g = classifier_gradient(m, d.examples[idx].input,
                                           d.examples[idx].label);
            for (std::size_t i = 0; i < 8; ++i)
                mean_grad[i] += g.at(i) / static_cast<double>(shard.size());
        }
        for (std::size_t i = 0; i < 8; ++i)
            CHECK(out.classifier.at(i) ==
                  doctest::Approx(m.classifier.at(i) - lr * mean_grad[i])
                      .epsilon(1e-10));
    }
    SUBCASE("frozen classifier is bitwise untouched") {
        ModelParams m =
            init_model({4, 8, 4}, 2, {HeadKind::Standard, 1.0}, true, 9);
        ModelParams out = local_train(m, d, shard, {LossKind::CrossEntropy, 0.0}, 4,
                                      10, 0.05, 31);
        CHECK(out.classifier.values() == m.classifier.values());
        CHECK(out.extractor[0].weight.values() != m.extractor[0].weight.values());
    }
    SUBCASE("deterministic in the seed") {
        ModelParams m = init_model({4, 6, 4}, 2, {HeadKind::Standard, 1.0}, false, 5);
        ModelParams a = local_train(m, d, shard, {LossKind::CrossEntropy, 0.0}, 2, 8,
                                    0.05, 40);
        ModelParams b = local_train(m, d, shard, {LossKind::CrossEntropy, 0.0}, 2, 8,
                                    0.05, 40);
        ModelParams c = local_train(m, d, shard, {LossKind::CrossEntropy, 0.0}, 2, 8,
                                    0.05, 41);
        CHECK(same_values(a, b));
        CHECK_FALSE(same_values(a, c));
    }
    SUBCASE("empty shard rejected") {
        ModelParams m = init_model({4, 6, 4}, 2, {HeadKind::Standard, 1.0}, false, 5);
        CHECK_THROWS_AS(local_train(m, d, {}, {LossKind::CrossEntropy, 0.0}, 1, 8,
                                    0.05, 1),
                        config_error);
    }
}

TEST_CASE("aggregate") {
    SUBCASE("matches a flat weighted-mean oracle bitwise") {
        std::vector<ModelParams> models;
        for (std::uint64_t s = 0; s < 3; ++s)
            models.push_back(
                init_model({4, 5, 3}, 2, {HeadKind::Standard, 1.0}, false, s));
        std::vector<double> w = {0.2, 0.3, 0.5};
        ModelParams out = aggregate(models, w);
        // oracle accumulates per parameter in the same model order
        auto oracle = [&](auto get, std::size_t i) {
            double acc = 0.0;
            for (std::size_t m = 0; m < 3; ++m) acc += w[m] * get(models[m], i);
            return acc;
        };
        for (std::size_t i = 0; i < out.classifier.size(); ++i)
            CHECK(out.classifier.at(i) ==
                  oracle([](const ModelParams& m, std::size_t i) {
                      return m.classifier.at(i);
                  }, i));
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t i = 0; i < out.extractor[l].weight.size(); ++i)
                CHECK(out.extractor[l].weight.at(i) ==
                      oracle([l](const ModelParams& m, std::size_t i) {
                          return m.extractor[l].weight.at(i);
                      }, i));
    }
    SUBCASE("single model with weight one is the identity") {
        ModelParams m = init_model({3, 4, 3}, 2, {HeadKind::Standard, 1.0}, false, 2);
        CHECK(same_values(aggregate({m}, {1.0}), m));
    }
    SUBCASE("frozen classifier passes through bitwise") {
        std::vector<ModelParams> models;
        for (std::uint64_t s = 0; s < 2; ++s) {
            ModelParams m =
                init_model({4, 4, 3}, 3, {HeadKind::FrozenOrthonormal, 2.0}, true, 7);
            // perturb the extractor only so the models differ
            m.extractor[0].weight.at(0) += 0.1 * static_cast<double>(s);
            models.push_back(m);
        }
        ModelParams out = aggregate(models, {0.5, 0.5});
        CHECK(out.classifier.values() == models[0].classifier.values());
        CHECK(out.frozen_classifier);
    }
    SUBCASE("weight validation") {
        ModelParams m = init_model({3, 4, 3}, 2, {HeadKind::Standard, 1.0}, false, 2);
        CHECK_THROWS_AS(aggregate({m, m}, {0.7, 0.2}), config_error);
        CHECK_THROWS_AS(aggregate({m, m}, {1.5, -0.5}), config_error);
        CHECK_THROWS_AS(aggregate({m, m}, {1.0}), config_error);
        CHECK_THROWS_AS(aggregate({}, {}), config_error);
    }
    SUBCASE("architecture mismatch") {
        ModelParams a = init_model({3, 4, 3}, 2, {HeadKind::Standard, 1.0}, false, 2);
        ModelParams b = init_model({3, 5, 3}, 2, {HeadKind::Standard, 1.0}, false, 2);
        CHECK_THROWS_AS(aggregate({a, b}, {0.5, 0.5}), config_error);
    }
}

TEST_CASE("evaluate argmax with lowest-index ties") {
    // identity logits: classifier rows are the standard basis
    ModelParams m = linear_model(Tensor({2, 2}, {1, 0, 0, 1}),
                                 HeadKind::Standard, false);
    Dataset d;
    d.num_classes = 2;
    d.examples.push_back({Tensor({2}, {2.0, 1.0}), 0});  // correct
    d.examples.push_back({Tensor({2}, {1.0, 2.0}), 0});  // wrong
    d.examples.push_back({Tensor({2}, {1.0, 1.0}), 0});  // tie -> class 0, correct
    d.examples.push_back({Tensor({2}, {1.0, 1.0}), 1});  // tie -> class 0, wrong
    d.rebuild_index();
    CHECK(evaluate(m, d) == 0.5);
    Dataset empty;
    CHECK_THROWS_AS(evaluate(m, empty), config_error);
}

TEST_CASE("run_federated") {
    Dataset train = gen_synthetic(4, 6, 40, 5.0, 0.8, 12);
    Dataset test = gen_synthetic(4, 6, 10, 5.0, 0.8, 13);

    FLConfig cfg;
    cfg.num_clients = 8;
    cfg.fraction = 0.5;
    cfg.rounds = 6;
    cfg.local_epochs = 2;
    cfg.batch_size = 10;
    cfg.lr = 0.05;
    cfg.seed = 99;
    cfg.snapshot_cadence = 3;
    Partition part = partition_iid(train, 8, 4);

    SUBCASE("deterministic end to end") {
        RunResult a = run_federated(cfg, train, test, part);
        RunResult b = run_federated(cfg, train, test, part);
        REQUIRE(a.metrics.size() == 6);
        for (std::size_t r = 0; r < 6; ++r) {
            CHECK(a.metrics[r].accuracy == b.metrics[r].accuracy);
            CHECK(a.metrics[r].mean_local_loss == b.metrics[r].mean_local_loss);
        }
        CHECK(same_values(a.final_model, b.final_model));
        // snapshots at rounds 2 and 5 under cadence 3
        REQUIRE(a.snapshots.size() == 2);
        CHECK(a.snapshots[0].round == 2);
        CHECK(a.snapshots[1].round == 5);
        CHECK(a.metrics[2].snapshot == 0);
        CHECK_FALSE(a.metrics[1].snapshot.has_value());
    }
    SUBCASE("fedfr with mu zero reproduces fedavg bitwise") {
        FLConfig avg = cfg;
        avg.algorithm = Algorithm::FedAVG;
        FLConfig fr = cfg;
        fr.algorithm = Algorithm::FedFR;
        fr.mu = 0.0;
        RunResult a = run_federated(avg, train, test, part);
        RunResult b = run_federated(fr, train, test, part);
        for (std::size_t r = 0; r < 6; ++r) {
            CHECK(a.metrics[r].accuracy == b.metrics[r].accuracy);
            CHECK(a.metrics[r].mean_local_loss == b.metrics[r].mean_local_loss);
        }
        CHECK(same_values(a.final_model, b.final_model));
    }
    SUBCASE("single client equals chained centralized training") {
        FLConfig solo = cfg;
        solo.num_clients = 1;
        solo.fraction = 1.0;
        solo.rounds = 4;
        Partition whole = partition_iid(train, 1, 0);
        ModelParams init = init_model({6, 8, 6}, 4, solo.head_spec(),
                                      solo.frozen_classifier(), 77);
        RunResult fed = run_federated_from(init, solo, train, test, whole);
        ModelParams manual = init;
        for (std::size_t r = 0; r < 4; ++r)
            manual = local_train(manual, train, whole.assignments[0],
                                 solo.loss_spec(), solo.local_epochs,
                                 solo.batch_size, lr_at_round(solo.lr, 4, r),
                                 derive_stream(solo.seed, r, 0));
        CHECK(same_values(fed.final_model, manual));
    }
    SUBCASE("spherefed keeps the classifier fixed for the whole run") {
        FLConfig sph = cfg;
        sph.algorithm = Algorithm::SphereFedCE;
        sph.tau = 4.0;
        ModelParams init = init_model({6, 8, 6}, 4, sph.head_spec(),
                                      sph.frozen_classifier(), 55);
        const std::vector<double> before = init.classifier.values();
        RunResult out = run_federated_from(init, sph, train, test, part);
        CHECK(out.final_model.classifier.values() == before);
    }
    SUBCASE("partition size mismatch rejected") {
        Partition wrong = partition_iid(train, 4, 0);
        CHECK_THROWS_AS(run_federated(cfg, train, test, wrong), config_error);
    }
}

TEST_CASE("derive_stream separates streams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t a = 0; a < 40; ++a)
        for (std::uint64_t b = 0; b < 40; ++b) seen.insert(derive_stream(123, a, b));
    CHECK(seen.size() == 1600);
    CHECK(derive_stream(1, 2, 3) == derive_stream(1, 2, 3));
    CHECK(derive_stream(1, 2, 3) != derive_stream(2, 2, 3));
}
