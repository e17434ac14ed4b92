#include <cmath>
#include <random>
#include <string>

#include "camc/errors.hpp"
#include "camc/grad_check.hpp"
#include "camc/model.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace camc;

namespace {

bool ends_with(const std::string& s, const std::string& tail) {
    return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

ModelConfig tiny() {
    ModelConfig c;
    c.name = "tiny";
    c.channels = {8, 12, 16, 20};
    c.depths = {1, 1, 1};
    c.window = 2;
    c.k_clusters = 3;
    c.d_s = 4;
    c.latent_channels = 20;
    c.hyper_channels = 8;
    c.head_dim = 4;
    return c;
}

}  // namespace

TEST_CASE("analysis and synthesis shapes") {
    Model m = Model::create(tiny(), 1);
    std::mt19937_64 rng(51);
    const Tensor img = testing::random_tensor({64, 48, 3}, rng, 0.0f, 1.0f);
    const Tensor y = analysis_transform(img, m);
    CHECK(y.shape() == Shape{4, 3, 20});
    const Tensor z = hyper_encoder(y, m);
    CHECK(z.shape() == Shape{1, 1, 8});
    const auto [mu, sigma] = hyper_decoder(z, m, 4, 3);
    CHECK(mu.shape() == Shape{4, 3, 20});
    CHECK(sigma.shape() == Shape{4, 3, 20});
    for (float s : sigma.data()) CHECK(s >= 0.11f);
    CHECK(synthesis_transform(y, m, 64, 48).shape() == Shape{64, 48, 3});
    CHECK(synthesis_transform(y, m, 60, 45).shape() == Shape{60, 45, 3});
    CHECK_THROWS_AS(analysis_transform(testing::random_tensor({40, 48, 3}, rng), m), DimensionError);
}

TEST_CASE("desk preset maps 64×64 to a 4×4 latent with the configured width") {
    ModelConfig c = ModelConfig::desk();
    c.latent_channels = 320;
    Model m = Model::create(c, 2);
    std::mt19937_64 rng(52);
    CHECK(analysis_transform(testing::random_tensor({64, 64, 3}, rng, 0.0f, 1.0f), m).shape() == Shape{4, 4, 320});
}

TEST_CASE("zero latent with zero offsets decodes to a zero image") {
    Model m = Model::create(tiny(), 3);
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        const std::string& n = m.params().name(i);
        if (ends_with(n, ".b") || ends_with(n, ".beta")) m.params().value(i) = Tensor(m.params().value(i).shape());
    }
    const Tensor out = synthesis_transform(Tensor({2, 2, 20}), m, 32, 32);
    for (float v : out.data()) CHECK(v == 0.0f);
}

TEST_CASE("parameters and clusters are laid out per stage") {
    const ModelConfig c = tiny();
    Model m = Model::create(c, 4);
    CHECK(m.clusters().size() == 3);  // one per unit in stages 3, 4, 5
    for (int s = 1; s <= 6; ++s) CHECK(m.stage_has_cam(s) == (s >= 3 && s <= 5));
    CHECK(m.stage(3).channels == 16);
    CHECK(m.stage(5).channels == 12);
    CHECK(m.params().find("enc.s3.u0.cam.dict").has_value());
    CHECK_FALSE(m.params().find("enc.s1.u0.cam.dict").has_value());
    const auto dict = *m.params().find("dec.s4.u0.cam.dict");
    CHECK(m.params().value(dict).shape() == Shape{3, 4});
    for (const auto& nc : m.clusters()) {
        CHECK_FALSE(nc.initialized);
        nc.model.validate();
    }
    CHECK_THROWS_AS(m.params().add("prior.loc", Tensor({1})), ContractError);
}

TEST_CASE("creation is deterministic in the seed") {
    Model a = Model::create(tiny(), 7), b = Model::create(tiny(), 7), c = Model::create(tiny(), 8);
    bool all_same = true, any_diff = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        all_same = all_same && a.params().value(i).identical(b.params().value(i));
        any_diff = any_diff || !a.params().value(i).identical(c.params().value(i));
    }
    CHECK(all_same);
    CHECK(any_diff);
}

TEST_CASE("config text round-trips and rejects bad input") {
    for (const ModelConfig& c : {ModelConfig::desk(), ModelConfig::paper(), tiny()}) {
        const ModelConfig back = ModelConfig::parse(c.to_text());
        CHECK(back.to_text() == c.to_text());
        CHECK(back.id() == c.id());
    }
    CHECK(ModelConfig::desk().id() != ModelConfig::paper().id());
    const ModelConfig p = ModelConfig::preset("paper");
    CHECK(p.channels == std::array<std::size_t, 4>{128, 192, 256, 320});
    CHECK(p.depths == std::array<std::size_t, 3>{3, 2, 2});
    CHECK(p.window == 8);
    CHECK(p.k_clusters == 64);
    const ModelConfig over = ModelConfig::parse("preset=desk\n# comment\nk_clusters=5\n");
    CHECK(over.k_clusters == 5);
    CHECK(over.window == 4);
    CHECK_THROWS_AS(ModelConfig::preset("huge"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::parse("bogus=1\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::parse("channels=1,2,3\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::parse("window=-2\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::parse("k_clusters=0\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::parse("ema_decay=1.5\n"), ConfigError);
    CHECK(tiny().heads_for(16) == 4);
    CHECK(tiny().heads_for(6) == 1);
}

TEST_CASE("mirror padding and cropping") {
    const Tensor img({3, 2, 1}, std::vector<float>{1, 2, 3, 4, 5, 6});
    const Tensor p = pad_to_multiple(img, 4);
    CHECK(p.shape() == Shape{4, 4, 1});
    // rows: 0 1 2 1, cols: 0 1 0 1
    const std::vector<float> expect{1, 2, 1, 2, 3, 4, 3, 4, 5, 6, 5, 6, 3, 4, 3, 4};
    CHECK(std::vector<float>(p.data().begin(), p.data().end()) == expect);
    CHECK(crop(p, 3, 2).identical(img));
    CHECK(pad_to_multiple(p, 4).identical(p));
    CHECK_THROWS_AS(crop(img, 4, 2), DimensionError);
}

TEST_CASE("training pass seeds cluster centers once") {
    Model m = Model::create(tiny(), 9);
    std::mt19937_64 rng(53);
    const Tensor img = testing::random_tensor({32, 32, 3}, rng, 0.0f, 1.0f);
    ad::Tape tape;
    ModelPass pass(m, tape, true, true);
    const ad::Var y = pass.analysis(tape.constant(img));
    pass.synthesis(y);
    for (const auto& nc : m.clusters()) CHECK(nc.initialized);
}

TEST_CASE("stage observer reports assignments for CAM stages") {
    Model m = Model::create(tiny(), 10);
    std::mt19937_64 rng(54);
    ad::Tape tape;
    ModelPass pass(m, tape, false, false);
    std::vector<int> stages;
    pass.set_observer([&](int s, std::size_t, const AssignmentVector& g, std::size_t h, std::size_t w) {
        stages.push_back(s);
        CHECK(g.size() == h * w);
    });
    pass.synthesis(pass.analysis(tape.constant(testing::random_tensor({32, 32, 3}, rng, 0.0f, 1.0f))));
    CHECK(stages == std::vector<int>{3, 4, 5});
}

TEST_CASE("gradients reach every parameter group") {
    ModelConfig c = tiny();
    c.channels = {4, 4, 4, 4};
    c.latent_channels = 4;
    c.hyper_channels = 4;
    c.k_clusters = 2;
    Model m = Model::create(c, 11);
    std::mt19937_64 rng(55);
    ad::Tape tape;
    ModelPass pass(m, tape, true, false);
    const ad::Var x = pass.synthesis(pass.analysis(tape.constant(testing::random_tensor({16, 16, 3}, rng, 0.0f, 1.0f))));
    const auto grads = tape.backward(ad::sum(ad::square(x)));
    std::size_t reached = 0;
    for (const ad::Var& v : pass.vars())
        if (const Tensor* g = grads.find(v))
            for (float e : g->data())
                if (e != 0.0f) {
                    ++reached;
                    break;
                }
    // Hyper transforms and the prior are not on this path.
    std::size_t on_path = 0;
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        const std::string& n = m.params().name(i);
        if (n.rfind("enc.", 0) == 0 || n.rfind("dec.", 0) == 0) ++on_path;
    }
    CHECK(reached >= on_path * 9 / 10);
}
