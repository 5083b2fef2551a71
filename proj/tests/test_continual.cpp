// Expert registry, argmin-of-output-norm inference, prototype baseline,
// evaluation, and the registry wire format.
#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "ovainn/continual.hpp"

using namespace ovainn;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Constant-shift expert: with A = B = 0 every subnet returns its bias, so the
// one-block net computes f(x) = x - t and the squared output norm is exactly
// the squared Euclidean distance to t. That makes every expected prediction
// computable by hand.
InvertibleNet point_expert(const Vector& t) {
    const std::size_t half = t.size() / 2;
    CouplingBlock blk;
    blk.half = half;
    for (SubNet* s : {&blk.f1, &blk.f2}) {
        s->activation = ActivationKind::tanh;
        s->A = Matrix(1, half);
        s->a.assign(1, 0.0);
        s->B = Matrix(half, 1);
        s->b.assign(half, 0.0);
    }
    for (std::size_t i = 0; i < half; ++i) blk.f1.b[i] = -t[i];
    for (std::size_t i = 0; i < half; ++i) blk.f2.b[i] = -t[half + i];
    std::vector<CouplingBlock> blocks;
    blocks.push_back(std::move(blk));
    return InvertibleNet(std::move(blocks));
}

Vector random_vector(std::size_t n, Rng& rng, double bound = 1.5) {
    Vector v(n);
    for (double& x : v) x = rng.next_uniform(bound);
    return v;
}

ExpertRegistry random_registry(const std::vector<std::int32_t>& ids, std::size_t dim, Rng& rng) {
    ExpertRegistry reg;
    for (std::int32_t id : ids) {
        reg.add_class(id, make_random_net(dim, 3, 2, ActivationKind::tanh, rng));
    }
    return reg;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name)
        : path((std::filesystem::temp_directory_path() / name).string()) {}
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path, ec);
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

TEST_CASE("registry appends experts and validates additions") {
    Rng rng(11);
    ExpertRegistry reg;
    REQUIRE(reg.empty());

    reg.add_class(7, make_random_net(4, 2, 1, ActivationKind::relu, rng));
    reg.add_class(2, make_random_net(4, 2, 1, ActivationKind::relu, rng));
    REQUIRE(reg.size() == 2);
    REQUIRE(reg.dim() == 4);
    REQUIRE(reg.class_ids() == std::vector<std::int32_t>{7, 2});  // insertion order
    REQUIRE(reg.has_class(7));
    REQUIRE_FALSE(reg.has_class(0));
    REQUIRE_NOTHROW(reg.net_for(2));
    REQUIRE_THROWS_AS(reg.net_for(0), LookupError);

    REQUIRE_THROWS_AS(reg.add_class(-1, make_random_net(4, 2, 1, ActivationKind::relu, rng)),
                      ConfigError);
    REQUIRE_THROWS_AS(reg.add_class(7, make_random_net(4, 2, 1, ActivationKind::relu, rng)),
                      ConflictError);
    REQUIRE_THROWS_AS(reg.add_class(3, make_random_net(6, 2, 1, ActivationKind::relu, rng)),
                      DimensionError);
}

TEST_CASE("adding a class leaves every prior expert bitwise unchanged") {
    Rng rng(5);
    ExpertRegistry reg;
    reg.add_class(0, make_random_net(6, 2, 2, ActivationKind::tanh, rng));
    reg.add_class(1, make_random_net(6, 2, 2, ActivationKind::tanh, rng));
    std::vector<Vector> before;
    for (const auto& e : reg.entries()) before.push_back(flatten_parameters(e.net));

    reg.add_class(2, make_random_net(6, 2, 2, ActivationKind::tanh, rng));
    for (std::size_t i = 0; i < before.size(); ++i) {
        REQUIRE(flatten_parameters(reg.entries()[i].net) == before[i]);
    }
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

TEST_CASE("predict picks the expert with the smallest squared output norm") {
    ExpertRegistry reg;
    reg.add_class(0, point_expert({0.0, 0.0}));
    reg.add_class(5, point_expert({2.0, 0.0}));

    const Prediction near_zero = predict(reg, {0.25, 0.0});
    REQUIRE(near_zero.class_id == 0);
    REQUIRE_THAT(near_zero.score, WithinRel(0.0625, 1e-15));
    REQUIRE(near_zero.per_class_scores.size() == 2);
    REQUIRE(near_zero.per_class_scores[0].first == 0);
    REQUIRE(near_zero.per_class_scores[1].first == 5);
    REQUIRE_THAT(near_zero.per_class_scores[1].second, WithinRel(3.0625, 1e-15));

    const Prediction near_five = predict(reg, {1.75, 0.0});
    REQUIRE(near_five.class_id == 5);
}

TEST_CASE("prediction ties resolve to the smallest class id in either insertion order") {
    // x = (1, 0) is exactly distance 1 from both experts; the arithmetic is
    // exact so the scores compare equal bitwise.
    for (bool reversed : {false, true}) {
        ExpertRegistry reg;
        if (reversed) {
            reg.add_class(5, point_expert({2.0, 0.0}));
            reg.add_class(0, point_expert({0.0, 0.0}));
        } else {
            reg.add_class(0, point_expert({0.0, 0.0}));
            reg.add_class(5, point_expert({2.0, 0.0}));
        }
        const Prediction p = predict(reg, {1.0, 0.0});
        REQUIRE(p.per_class_scores[0].second == p.per_class_scores[1].second);
        REQUIRE(p.class_id == 0);
    }
}

TEST_CASE("predict validates its inputs") {
    ExpertRegistry empty;
    REQUIRE_THROWS_AS(predict(empty, {0.0, 0.0}), StateError);

    ExpertRegistry reg;
    reg.add_class(0, point_expert({0.0, 0.0}));
    REQUIRE_THROWS_AS(predict(reg, {0.0, 0.0, 0.0, 0.0}), DimensionError);
}

TEST_CASE("predicted score equals the winning expert's squared output norm") {
    Rng rng(21);
    ExpertRegistry reg = random_registry({0, 1, 2}, 8, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x = random_vector(8, rng);
        const Prediction p = predict(reg, x);
        REQUIRE(p.score == squared_norm(net_forward(reg.net_for(p.class_id), x)));
        for (const auto& [id, s] : p.per_class_scores) {
            REQUIRE(s >= p.score);
        }
    }
}

TEST_CASE("predictions are independent of learning order") {
    Rng rng(33);
    std::vector<std::pair<std::int32_t, InvertibleNet>> experts;
    for (std::int32_t id : {0, 1, 2, 3}) {
        experts.emplace_back(id, make_random_net(6, 2, 2, ActivationKind::leaky_relu, rng));
    }
    ExpertRegistry forward;
    for (const auto& [id, net] : experts) forward.add_class(id, net);
    ExpertRegistry shuffled;
    for (int i : {2, 0, 3, 1}) shuffled.add_class(experts[i].first, experts[i].second);

    for (int trial = 0; trial < 100; ++trial) {
        const Vector x = random_vector(6, rng);
        REQUIRE(predict(forward, x).class_id == predict(shuffled, x).class_id);
    }
}

TEST_CASE("smallest output norm and largest log-likelihood agree") {
    // Volume-preserving maps make the likelihood a fixed monotone transform of
    // the output norm, so the two selection rules can never disagree.
    Rng rng(44);
    ExpertRegistry reg = random_registry({3, 1, 4, 0, 2}, 8, rng);
    for (int trial = 0; trial < 200; ++trial) {
        const Vector x = random_vector(8, rng);
        const Prediction by_norm = predict(reg, x);

        std::int32_t by_likelihood = -1;
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& e : reg.entries()) {
            const double ll = log_likelihood(e.net, x);
            if (ll > best || (ll == best && e.class_id < by_likelihood)) {
                best = ll;
                by_likelihood = e.class_id;
            }
        }
        REQUIRE(by_norm.class_id == by_likelihood);
    }
}

TEST_CASE("multi-head prediction restricts the competition to the allowed set") {
    ExpertRegistry reg;
    reg.add_class(0, point_expert({0.0, 0.0}));
    reg.add_class(1, point_expert({1.0, 0.0}));
    reg.add_class(2, point_expert({2.0, 0.0}));

    const Vector x = {0.1, 0.0};  // globally closest to class 0
    REQUIRE(predict(reg, x).class_id == 0);

    const Prediction restricted = predict_multi_head(reg, x, {1, 2});
    REQUIRE(restricted.class_id == 1);
    REQUIRE(restricted.per_class_scores.size() == 2);

    REQUIRE(predict_multi_head(reg, x, {2}).class_id == 2);
    REQUIRE_THROWS_AS(predict_multi_head(reg, x, {}), ConfigError);
    REQUIRE_THROWS_AS(predict_multi_head(reg, x, {9}), LookupError);
}

// ---------------------------------------------------------------------------
// Prototype baseline
// ---------------------------------------------------------------------------

TEST_CASE("fit_prototypes computes per-class means") {
    std::map<std::int32_t, std::vector<Vector>> data;
    data[3] = {{0.0, 2.0}, {2.0, 4.0}};
    data[8] = {{10.0, 10.0}};
    const PrototypeModel model = fit_prototypes(data);
    REQUIRE(model.prototypes.at(3) == Vector{1.0, 3.0});
    REQUIRE(model.prototypes.at(8) == Vector{10.0, 10.0});

    data[5] = {};
    REQUIRE_THROWS_AS(fit_prototypes(data), EmptyDatasetError);
}

TEST_CASE("predict_prototype is nearest-mean with smallest-id ties") {
    PrototypeModel model;
    model.prototypes[4] = {0.0};
    model.prototypes[1] = {2.0};
    REQUIRE(predict_prototype(model, {0.4}) == 4);
    REQUIRE(predict_prototype(model, {1.7}) == 1);
    REQUIRE(predict_prototype(model, {1.0}) == 1);  // exact tie, smaller id wins

    REQUIRE_THROWS_AS(predict_prototype(PrototypeModel{}, {0.0}), StateError);
    REQUIRE_THROWS_AS(predict_prototype(model, {0.0, 0.0}), DimensionError);
}

TEST_CASE("prototypes separate well-spread Gaussian clusters perfectly") {
    Rng rng(60);
    const std::vector<Vector> centers = {
        {8.0, 0.0, 0.0, 0.0}, {0.0, 8.0, 0.0, 0.0}, {0.0, 0.0, 8.0, 0.0}};
    std::map<std::int32_t, std::vector<Vector>> train;
    LabeledVectors test;
    test.dim = 4;
    for (std::int32_t c = 0; c < 3; ++c) {
        for (int i = 0; i < 40; ++i) {
            Vector v = centers[c];
            for (double& x : v) x += rng.next_uniform(0.5);
            if (i < 25) {
                train[c].push_back(v);
            } else {
                test.vectors.push_back(v);
                test.labels.push_back(c);
            }
        }
    }
    const PrototypeModel model = fit_prototypes(train);
    const EvalReport report = evaluate_prototype(model, test);
    REQUIRE(report.total == 45);
    REQUIRE(report.correct == 45);
    REQUIRE(report.accuracy() == 1.0);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

LabeledVectors line_test_set() {
    // Experts sit at 0, 1, 2 on the first axis; samples near each.
    LabeledVectors test;
    test.dim = 2;
    test.vectors = {{0.1, 0.0}, {-0.2, 0.0}, {1.1, 0.0}, {0.2, 0.0}, {1.9, 0.0}};
    test.labels = {0, 0, 1, 1, 2};  // sample 3 sits nearest to expert 0
    return test;
}

ExpertRegistry line_registry() {
    ExpertRegistry reg;
    reg.add_class(0, point_expert({0.0, 0.0}));
    reg.add_class(1, point_expert({1.0, 0.0}));
    reg.add_class(2, point_expert({2.0, 0.0}));
    return reg;
}

}  // namespace

TEST_CASE("evaluate fills the confusion matrix in registry order") {
    const EvalReport report = evaluate(line_registry(), line_test_set(), EvalMode::single_head);
    REQUIRE(report.mode == EvalMode::single_head);
    REQUIRE(report.class_ids == std::vector<std::int32_t>{0, 1, 2});
    REQUIRE(report.total == 5);
    REQUIRE(report.correct == 4);
    REQUIRE_THAT(report.accuracy(), WithinRel(0.8, 1e-15));

    // Row sums match the per-class test counts.
    REQUIRE(report.confusion[0][0] == 2);
    REQUIRE(report.confusion[1][0] == 1);  // the 0.2 sample labeled 1
    REQUIRE(report.confusion[1][1] == 1);
    REQUIRE(report.confusion[2][2] == 1);
    std::uint64_t sum = 0;
    for (const auto& row : report.confusion) {
        for (std::uint64_t v : row) sum += v;
    }
    REQUIRE(sum == report.total);

    REQUIRE(report.accuracy_after_each_batch.size() == 1);
    REQUIRE(report.accuracy_after_each_batch[0].first == 3);
    REQUIRE(report.accuracy_after_each_batch[0].second == report.accuracy());
}

TEST_CASE("evaluate produces the identical report for every thread count") {
    Rng rng(71);
    ExpertRegistry reg = random_registry({0, 1, 2, 3}, 6, rng);
    LabeledVectors test;
    test.dim = 6;
    for (int i = 0; i < 64; ++i) {
        test.vectors.push_back(random_vector(6, rng));
        test.labels.push_back(static_cast<std::int32_t>(rng.next() % 4));
    }
    const EvalReport one = evaluate(reg, test, EvalMode::single_head, nullptr, 1);
    for (unsigned threads : {2u, 3u, 7u, 64u}) {
        const EvalReport many = evaluate(reg, test, EvalMode::single_head, nullptr, threads);
        REQUIRE(many.confusion == one.confusion);
        REQUIRE(many.correct == one.correct);
        REQUIRE(many.accuracy_after_each_batch == one.accuracy_after_each_batch);
    }
}

TEST_CASE("multi-head evaluation repairs cross-task confusions") {
    ExpertRegistry reg;
    reg.add_class(0, point_expert({0.0, 0.0}));
    reg.add_class(1, point_expert({0.5, 0.0}));
    LabeledVectors test;
    test.dim = 2;
    test.vectors = {{0.2, 0.0}};  // nearer to expert 0, but belongs to class 1
    test.labels = {1};

    const EvalReport single = evaluate(reg, test, EvalMode::single_head);
    REQUIRE(single.correct == 0);

    const TaskPartition tasks = {{0}, {1}};
    const EvalReport multi = evaluate(reg, test, EvalMode::multi_head, &tasks);
    REQUIRE(multi.mode == EvalMode::multi_head);
    REQUIRE(multi.correct == 1);
}

TEST_CASE("evaluate validates modes, partitions and labels") {
    ExpertRegistry reg = line_registry();
    const LabeledVectors test = line_test_set();
    const TaskPartition tasks = {{0, 1}, {2}};

    REQUIRE_THROWS_AS(evaluate(ExpertRegistry{}, test, EvalMode::single_head), StateError);
    REQUIRE_THROWS_AS(evaluate(reg, LabeledVectors{}, EvalMode::single_head), EmptyDatasetError);
    REQUIRE_THROWS_AS(evaluate(reg, test, EvalMode::single_head, &tasks), ConfigError);
    REQUIRE_THROWS_AS(evaluate(reg, test, EvalMode::multi_head, nullptr), ConfigError);

    const TaskPartition with_empty = {{0, 1, 2}, {}};
    REQUIRE_THROWS_AS(evaluate(reg, test, EvalMode::multi_head, &with_empty), ConfigError);
    const TaskPartition overlapping = {{0, 1}, {1, 2}};
    REQUIRE_THROWS_AS(evaluate(reg, test, EvalMode::multi_head, &overlapping), ConfigError);
    const TaskPartition unregistered = {{0, 1}, {2, 9}};
    REQUIRE_THROWS_AS(evaluate(reg, test, EvalMode::multi_head, &unregistered), LookupError);
    const TaskPartition uncovering = {{0, 1}};  // test has label 2
    REQUIRE_THROWS_AS(evaluate(reg, test, EvalMode::multi_head, &uncovering), ConfigError);

    LabeledVectors alien = test;
    alien.labels[0] = 42;
    REQUIRE_THROWS_AS(evaluate(reg, alien, EvalMode::single_head), LookupError);
}

TEST_CASE("parallel_for covers each index exactly once and propagates errors") {
    std::vector<int> hits(100, 0);
    detail::parallel_for(hits.size(), 7, [&](std::size_t i) { hits[i]++; });
    for (int h : hits) REQUIRE(h == 1);

    detail::parallel_for(0, 4, [&](std::size_t) { FAIL("must not be called"); });

    REQUIRE_THROWS_AS(detail::parallel_for(
                          8, 3, [](std::size_t i) { if (i == 5) throw LookupError("boom"); }),
                      LookupError);
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

TEST_CASE("registry codec round-trips an empty registry") {
    const std::vector<std::uint8_t> bytes = encode_registry(ExpertRegistry{});
    REQUIRE(bytes.size() == 18);  // magic + version + count + dim
    const ExpertRegistry back = decode_registry(bytes, "mem");
    REQUIRE(back.empty());
}

TEST_CASE("registry codec round-trips nets through 32-bit floats") {
    Rng rng(90);
    ExpertRegistry reg;
    reg.add_class(4, make_random_net(6, 3, 2, ActivationKind::relu, rng));
    reg.add_class(0, make_random_net(6, 3, 2, ActivationKind::tanh, rng));
    reg.add_class(9, make_random_net(6, 3, 2, ActivationKind::leaky_relu, rng));

    const std::vector<std::uint8_t> bytes = encode_registry(reg);
    const ExpertRegistry back = decode_registry(bytes, "mem");
    REQUIRE(back.class_ids() == std::vector<std::int32_t>{4, 0, 9});
    REQUIRE(back.dim() == 6);

    for (std::size_t k = 0; k < reg.size(); ++k) {
        const auto& orig = reg.entries()[k];
        const auto& restored = back.entries()[k];
        REQUIRE(restored.net.blocks().size() == 2);
        REQUIRE(restored.net.blocks()[0].f1.activation == orig.net.blocks()[0].f1.activation);
        const Vector before = flatten_parameters(orig.net);
        const Vector after = flatten_parameters(restored.net);
        REQUIRE(after.size() == before.size());
        for (std::size_t i = 0; i < before.size(); ++i) {
            // Exactly the f32 rounding of the original, nothing else.
            REQUIRE(after[i] == static_cast<double>(static_cast<float>(before[i])));
        }
    }

    // A decode/encode cycle is the identity on the byte stream.
    REQUIRE(encode_registry(back) == bytes);
}

TEST_CASE("decoded registries predict identically to their source") {
    Rng rng(91);
    ExpertRegistry reg = random_registry({0, 1, 2}, 4, rng);
    const ExpertRegistry back = decode_registry(encode_registry(reg), "mem");
    for (int trial = 0; trial < 50; ++trial) {
        const Vector x = random_vector(4, rng);
        // f32 rounding perturbs scores but agreement on the argmin should be
        // overwhelming for generic inputs; require full agreement here because
        // these nets are far from decision boundaries at f32 resolution.
        REQUIRE(predict(back, x).class_id == predict(reg, x).class_id);
    }
}

TEST_CASE("save_registry and load_registry round-trip through a file") {
    Rng rng(92);
    ExpertRegistry reg = random_registry({1, 3}, 4, rng);
    TempFile f("ovainn_registry_roundtrip.bin");
    save_registry(reg, f.path);
    const ExpertRegistry back = load_registry(f.path);
    REQUIRE(back.class_ids() == reg.class_ids());
    REQUIRE(encode_registry(back) == encode_registry(reg));
}

TEST_CASE("the encoded stream grows by appending when classes are added") {
    Rng rng(93);
    ExpertRegistry reg;
    reg.add_class(0, make_random_net(4, 2, 1, ActivationKind::tanh, rng));
    const std::vector<std::uint8_t> one = encode_registry(reg);
    reg.add_class(1, make_random_net(4, 2, 1, ActivationKind::tanh, rng));
    const std::vector<std::uint8_t> two = encode_registry(reg);

    // Identical past: everything after the header is a prefix of the new file.
    REQUIRE(two.size() > one.size());
    REQUIRE(std::equal(one.begin() + 18, one.end(), two.begin() + 18));
}

TEST_CASE("decode_registry rejects malformed input with byte offsets") {
    Rng rng(94);
    ExpertRegistry reg;
    reg.add_class(0, make_random_net(2, 1, 1, ActivationKind::relu, rng));
    reg.add_class(1, make_random_net(2, 1, 1, ActivationKind::relu, rng));
    const std::vector<std::uint8_t> bytes = encode_registry(reg);
    const std::size_t net_size = (bytes.size() - 18) / 2;

    SECTION("bad magic") {
        auto broken = bytes;
        broken[0] = 'X';
        REQUIRE_THROWS_MATCHES(decode_registry(broken, "mem"), FormatError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("byte offset 0")));
    }
    SECTION("unsupported version") {
        auto broken = bytes;
        broken[8] = 2;
        REQUIRE_THROWS_MATCHES(decode_registry(broken, "mem"), FormatError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("version")));
    }
    SECTION("odd dim") {
        auto broken = bytes;
        broken[14] = 3;
        REQUIRE_THROWS_MATCHES(decode_registry(broken, "mem"), FormatError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("must be even")));
    }
    SECTION("truncated parameters") {
        auto broken = bytes;
        broken.resize(broken.size() - 5);
        REQUIRE_THROWS_MATCHES(decode_registry(broken, "mem"), FormatError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("truncated at byte offset")));
    }
    SECTION("trailing bytes") {
        auto broken = bytes;
        broken.push_back(0);
        REQUIRE_THROWS_MATCHES(decode_registry(broken, "mem"), FormatError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("trailing bytes")));
    }
    SECTION("duplicate class id") {
        auto broken = bytes;
        // Overwrite the second net's class id with the first net's id (0).
        for (std::size_t i = 0; i < 4; ++i) broken[18 + net_size + i] = 0;
        REQUIRE_THROWS_MATCHES(decode_registry(broken, "mem"), FormatError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("duplicate class id")));
    }
    SECTION("negative class id") {
        auto broken = bytes;
        for (std::size_t i = 0; i < 4; ++i) broken[18 + i] = 0xFF;
        REQUIRE_THROWS_MATCHES(decode_registry(broken, "mem"), FormatError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("exceeds")));
    }
    SECTION("zero blocks") {
        auto broken = bytes;
        broken[18 + 4] = 0;
        broken[18 + 5] = 0;
        REQUIRE_THROWS_MATCHES(decode_registry(broken, "mem"), FormatError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("zero blocks")));
    }
    SECTION("zero rank") {
        auto broken = bytes;
        for (std::size_t i = 0; i < 4; ++i) broken[18 + 6 + i] = 0;
        REQUIRE_THROWS_MATCHES(decode_registry(broken, "mem"), FormatError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("zero-sized")));
    }
    SECTION("unknown activation code") {
        auto broken = bytes;
        broken[18 + 10] = 7;
        REQUIRE_THROWS_MATCHES(decode_registry(broken, "mem"), FormatError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("activation code 7")));
    }
}

TEST_CASE("encode_registry requires a uniform rank and activation per net") {
    // Hand-build a net whose two blocks disagree on rank; the wire format
    // cannot represent it.
    auto make_block = [](std::size_t half, std::size_t rank) {
        CouplingBlock blk;
        blk.half = half;
        for (SubNet* s : {&blk.f1, &blk.f2}) {
            s->activation = ActivationKind::relu;
            s->A = Matrix(rank, half);
            s->a.assign(rank, 0.0);
            s->B = Matrix(half, rank);
            s->b.assign(half, 0.0);
        }
        return blk;
    };
    std::vector<CouplingBlock> blocks;
    blocks.push_back(make_block(2, 1));
    blocks.push_back(make_block(2, 3));
    ExpertRegistry reg;
    reg.add_class(0, InvertibleNet(std::move(blocks)));
    REQUIRE_THROWS_AS(encode_registry(reg), ConfigError);
}
