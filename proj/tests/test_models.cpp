#include <doctest.h>

#include "advpe/campaign.hpp"
#include "advpe/model_io.hpp"
#include "advpe/models.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace advpe;

namespace {

constexpr ModelKind differentiable_kinds[] = {ModelKind::ToyMalConv, ModelKind::ToyHierLin, ModelKind::ToyHierReLU};

}  // namespace

TEST_CASE("default architectures") {
    const auto mc = Classifier::create(ModelKind::ToyMalConv, 1);
    CHECK(mc.window() == 16384);
    CHECK(mc.embedding_table().rows() == 257);
    CHECK(mc.embedding_table().cols() == 8);
    CHECK(mc.malconv()->config().kernel == 500);
    CHECK(mc.malconv()->config().filters == 128);
    CHECK(mc.malconv()->positions() == 33);

    const auto h = Classifier::create(ModelKind::ToyHierLin, 1);
    CHECK(h.window() == 4096);
    CHECK(h.embedding_table().cols() == 10);
    CHECK(h.hier()->config().stages == 5);
    CHECK_FALSE(h.hier()->config().relu);
    CHECK(Classifier::create(ModelKind::ToyHierReLU, 1).hier()->config().relu);

    const auto hc = Classifier::create(ModelKind::HandCrafted, 1);
    CHECK_FALSE(hc.differentiable());
    CHECK_THROWS_AS(static_cast<void>(hc.embed(testing::small_corpus()[0].bytes)), Error);
    CHECK_THROWS_AS(Classifier::create(ModelKind::ToyHierLin, 1, {1000, {}, {}}), Error);
}

TEST_CASE("embedding lookup, padding and truncation") {
    auto model = testing::tiny_model(ModelKind::ToyHierLin);
    const Matrix E = model.embedding_table();

    Bytes b(10, 0);
    b[3] = 7;
    const Matrix x = model.embed(b);
    CHECK(x.rows() == model.window());
    CHECK(x.row(3) == E.row(7));
    CHECK(x.row(0) == E.row(0));
    CHECK(x.row(10) == E.row(padding_token));
    CHECK(x.row(model.window() - 1) == E.row(padding_token));

    const Matrix empty = model.embed({});
    for (Index i = 0; i < empty.rows(); ++i) REQUIRE(empty.row(i) == E.row(padding_token));

    Bytes longer(static_cast<std::size_t>(model.window()) + 500, 9);
    CHECK(model.embed(longer).rows() == model.window());
}

TEST_CASE("zero weights give score one half") {
    for (auto kind : differentiable_kinds) {
        auto model = testing::tiny_model(kind);
        model.parameters().setZero();
        CHECK(model.forward(model.embed({})) == 0.5);
    }
}

TEST_CASE("shape mismatch and determinism") {
    const auto model = testing::tiny_model(ModelKind::ToyMalConv);
    CHECK_THROWS_AS(static_cast<void>(model.forward(Matrix::Zero(10, 8))), Error);
    const auto& z = testing::small_corpus()[0].bytes;
    CHECK(model.score(z) == model.score(z));
}

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(11);
    for (auto kind : differentiable_kinds) {
        const auto model = testing::tiny_model(kind, 5);
        for (int trial = 0; trial < 4; ++trial) {
            const Matrix x = testing::random_input(model, rng);
            const double err = testing::gradient_check(model, x, rng);
            CHECK_MESSAGE(err < 1e-3, to_string(kind), " relative error ", err);
        }
    }
}

TEST_CASE("single-filter max pool routes gradient to one window only") {
    Classifier model = Classifier::create(ModelKind::ToyMalConv, 2, {1000, 1, 3});
    Rng rng(4);
    const Matrix x = testing::random_input(model, rng);
    const Matrix g = model.gradient(x);
    const Index K = model.malconv()->config().kernel;
    Index nonzero_windows = 0;
    for (Index p = 0; p * K < g.rows(); ++p) {
        const Index rows = std::min(K, g.rows() - p * K);
        nonzero_windows += g.middleRows(p * K, rows).cwiseAbs().sum() > 0 ? 1 : 0;
    }
    CHECK(nonzero_windows <= 1);
}

TEST_CASE("appending beyond the window never changes the score") {
    for (auto kind : differentiable_kinds) {
        const auto model = testing::tiny_model(kind);
        Bytes z(static_cast<std::size_t>(model.window()) + 3, 0x90);
        const double before = model.score(z);
        z.insert(z.end(), 2000, 0xCC);
        CHECK(model.score(z) == before);
    }
}

TEST_CASE("training needs both classes and is deterministic") {
    std::vector<Sample> malware;
    for (const auto& s : testing::small_corpus()) {
        if (s.label == 1) malware.push_back(s);
    }
    CHECK_THROWS_AS(train(labeled(malware), ModelKind::HandCrafted), Error);

    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.model = {1024, 4, {}};
    const auto data = labeled(testing::small_corpus());
    const auto a = train(data, ModelKind::ToyHierReLU, cfg);
    const auto b = train(data, ModelKind::ToyHierReLU, cfg);
    CHECK(a.model.parameters() == b.model.parameters());
}

TEST_CASE("hand-crafted model separates the synthetic corpus") {
    const auto r = train(labeled(testing::small_corpus()), ModelKind::HandCrafted);
    CHECK(r.train_accuracy >= 0.95);
    for (const auto& s : testing::small_corpus()) {
        const double score = r.model.score(s.bytes);
        CHECK(score >= 0.0);
        CHECK(score <= 1.0);
    }
}

TEST_CASE("model container round-trips exactly") {
    for (auto kind : {ModelKind::ToyMalConv, ModelKind::ToyHierLin, ModelKind::ToyHierReLU, ModelKind::HandCrafted}) {
        auto model = testing::tiny_model(kind, 8);
        if (kind == ModelKind::ToyHierLin) model.set_threshold(0.123456789012345678);
        const auto bytes = encode_model(model);
        const auto back = decode_model(bytes);
        CHECK(back.kind() == kind);
        CHECK(back.window() == model.window());
        CHECK(back.parameters() == model.parameters());
        CHECK(back.threshold() == model.threshold());
        CHECK(encode_model(back) == bytes);
    }
    Bytes junk = encode_model(testing::tiny_model(ModelKind::HandCrafted));
    junk.pop_back();
    CHECK_THROWS_AS(decode_model(junk), Error);
    junk[0] = 'X';
    CHECK_THROWS_AS(decode_model(junk), Error);
}
