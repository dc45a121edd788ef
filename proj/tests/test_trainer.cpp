#include <doctest.h>

#include <cmath>

#include "cmis/checkpoint.hpp"
#include "cmis/trainer.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace cmis;
using cmis::test::TempDir;
using cmis::test::tiny_config;

namespace {

struct Rig {
    ExperimentConfig cfg;
    Dataset data;
    NeutralBank bank;
    std::unique_ptr<CmisModel> model;

    explicit Rig(std::uint64_t seed, const std::string& components = "FLE+FLT+SLE+SLT", const KeyValues& extra = {})
        : cfg(tiny_config(seed, extra)) {
        cfg.ablation = AblationSpec::from_components(components);
        data = load_experiment_data(cfg);
        bank = build_neutral_bank(data, cfg.ablation.neutral);
        model = std::make_unique<CmisModel>(cfg.resolved_model(data.width()), cfg.ablation, seed);
    }
    Trainer trainer() { return Trainer(*model, data, bank, cfg.train, cfg.effective_ida()); }
};

std::map<ModuleId, std::uint64_t> digests(CmisModel& m) {
    std::map<ModuleId, std::uint64_t> out;
    for (ModuleId id : kAllModules)
        if (m.has(id)) out[id] = parameter_digest(m.parameters(id));
    return out;
}

std::set<ModuleId> changed(const std::map<ModuleId, std::uint64_t>& a, const std::map<ModuleId, std::uint64_t>& b) {
    std::set<ModuleId> out;
    for (const auto& [id, d] : a)
        if (!b.contains(id) || b.at(id) != d) out.insert(id);
    return out;
}

}  // namespace

TEST_CASE("step learning rate restarts with the stage") {
    TrainConfig c;
    CHECK(learning_rate(c, 0) == 0.01);
    CHECK(learning_rate(c, 19) == 0.01);
    CHECK(learning_rate(c, 20) == doctest::Approx(0.001));
    CHECK(learning_rate(c, 45) == doctest::Approx(0.0001));
}

TEST_CASE("momentum SGD with weight decay") {
    Parameter p(Matrix{{1.0, -2.0}});
    p.zero_grad();
    p.grad = Matrix{{0.5, 0.5}};
    const ParamList params{{"p", &p}};
    reset_momentum(params);
    sgd_step(params, 0.1, 0.9, 0.01);
    // v = g + wd·w; w -= lr·v
    CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.1 * (0.5 + 0.01)));
    CHECK(p.value(0, 1) == doctest::Approx(-2.0 - 0.1 * (0.5 - 0.02)));
    const double w0 = p.value(0, 0);
    sgd_step(params, 0.1, 0.9, 0.0);
    CHECK(p.value(0, 0) == doctest::Approx(w0 - 0.1 * (0.9 * 0.51 + 0.5)));
    p.frozen = true;
    const Matrix before = p.value;
    sgd_step(params, 0.1, 0.9, 0.01);
    CHECK(p.value == before);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.n_neutral = 1;
    CHECK_THROWS(validate(c));
    c = {};
    c.lr = 0.0;
    CHECK_THROWS(validate(c));
    c = {};
    c.batch_size = 0;
    CHECK_THROWS(validate(c));
}

TEST_CASE("each stage moves only its own modules") {
    Rig rig(0);
    rig.cfg.train.epochs = {2, 2, 2, 2};
    Trainer tr = rig.trainer();
    const std::vector<std::pair<Stage, std::set<ModuleId>>> expected{
        {Stage::neutral, {ModuleId::flne, ModuleId::slne}},
        {Stage::emotional, {ModuleId::flee, ModuleId::slee, ModuleId::r_hat}},
        {Stage::translators, {ModuleId::flt, ModuleId::slt}},
        {Stage::regressor, {ModuleId::tap, ModuleId::r}},
    };
    for (const auto& [stage, moved] : expected) {
        CAPTURE(to_string(stage));
        const auto before = digests(*rig.model);
        tr.run_stage(stage);
        auto after = digests(*rig.model);
        std::set<ModuleId> diff = changed(before, after);
        // R̂ is dropped at the end of stage 2, which also counts as a change.
        CHECK(diff == moved);
    }
}

TEST_CASE("stage 2 freezes the emotional encoders and drops the temporary head") {
    Rig rig(1);
    rig.cfg.train.epochs = {1, 1, 1, 1};
    Trainer tr = rig.trainer();
    tr.run_stage(Stage::neutral);
    tr.run_stage(Stage::emotional);
    CHECK(rig.model->frozen(ModuleId::flee));
    CHECK(rig.model->frozen(ModuleId::slee));
    CHECK_FALSE(rig.model->has(ModuleId::r_hat));
    TempDir dir("stage2");
    save_checkpoint(dir / "c.ckpt", *rig.model, {rig.cfg, rig.model->config(), 1, tr.progress(), tr.metrics()});
    const LoadedCheckpoint ck = load_checkpoint(dir / "c.ckpt");
    CHECK_FALSE(ck.model->has(ModuleId::r_hat));
    CHECK(ck.model->frozen(ModuleId::flee));
}

TEST_CASE("one neutral epoch lowers the neutral loss in most seeds") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rig rig(seed);
        rig.cfg.train.epochs = {1, 1, 1, 1};
        Trainer tr = rig.trainer();
        const double before = tr.measure(Stage::neutral, rig.data.train, 1);
        tr.run_stage(Stage::neutral);
        const double after = tr.measure(Stage::neutral, rig.data.train, 1);
        wins += after < before;
    }
    CHECK(wins >= 4);
}

TEST_CASE("emotional pre-training lowers its training loss in most seeds") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rig rig(seed, "FLE+SLE");
        rig.cfg.train.epochs = {0, 6, 0, 0};
        Trainer tr = rig.trainer();
        tr.run_stage(Stage::emotional);
        const auto& m = tr.metrics();
        wins += m.back().stage == "emotional" && m[m.size() - 2].loss < m[0].loss;
    }
    CHECK(wins >= 4);
}

TEST_CASE("translator stage skips individuals without neutrals") {
    Rig rig(2);
    // Remove every negative of one individual from the bank.
    const std::string ghost = rig.data.train.front().individual_id();
    rig.bank.pools.erase(ghost);
    std::size_t expected = 0;
    for (const Sample& s : rig.data.train) expected += s.individual_id() == ghost;
    REQUIRE(expected > 0);
    rig.cfg.train.epochs = {1, 1, 1, 1};
    Trainer tr = rig.trainer();
    tr.run_stage(Stage::neutral);
    tr.run_stage(Stage::emotional);
    const auto before = digests(*rig.model);
    tr.run_stage(Stage::translators);
    CHECK(tr.skipped_samples() == expected);
    const auto after = digests(*rig.model);
    for (ModuleId id : {ModuleId::flne, ModuleId::flee, ModuleId::slne, ModuleId::slee})
        CHECK(before.at(id) == after.at(id));
}

TEST_CASE("final regressor is no worse than the temporary head in most seeds") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rig rig(seed, "FLE+FLT+SLE+SLT", {{"synth.n_individuals", "10"}, {"synth.samples_per_individual", "10"}});
        rig.cfg.train.epochs = {1, 5, 10, 15};
        Trainer tr = rig.trainer();
        tr.run();
        double rhat = 0.0, final = 0.0;
        for (const auto& row : tr.metrics()) {
            if (row.split != "validation") continue;
            if (row.stage == "emotional") rhat = row.mse;
            if (row.stage == "regressor") final = row.mse;
        }
        wins += final <= rhat;
    }
    CHECK(wins >= 3);
}

TEST_CASE("metrics log has a train and a validation row per epoch of every stage") {
    Rig rig(3);
    rig.cfg.train.epochs = {2, 3, 1, 2};
    Trainer tr = rig.trainer();
    std::size_t hook_calls = 0;
    tr.set_epoch_hook([&](const Trainer&) { ++hook_calls; });
    tr.run();
    CHECK(tr.progress().stage == Stage::done);
    CHECK(tr.metrics().size() == 2 * 8);
    CHECK(hook_calls == 8);
    std::map<std::string, std::size_t> rows;
    for (const auto& r : tr.metrics()) {
        ++rows[r.stage];
        CHECK(std::isnan(r.mse) == (r.stage == "neutral" || r.stage == "translators"));
        CHECK(std::isfinite(r.loss));
    }
    CHECK(rows["neutral"] == 4);
    CHECK(rows["emotional"] == 6);
    CHECK(rows["translators"] == 2);
    CHECK(rows["regressor"] == 4);
    const std::string csv = format_metrics(tr.metrics());
    CHECK(csv.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
}

TEST_CASE("inactive stages are skipped") {
    Rig rig(4, "FLE+SLE");
    rig.cfg.train.epochs = {3, 1, 3, 1};
    Trainer tr = rig.trainer();
    CHECK_FALSE(tr.stage_active(Stage::neutral));
    CHECK_FALSE(tr.stage_active(Stage::translators));
    tr.run();
    for (const auto& r : tr.metrics()) CHECK((r.stage == "emotional" || r.stage == "regressor"));
    CHECK(tr.metrics().size() == 4);
}

TEST_CASE("fixed seeds give identical metrics") {
    auto run = [] {
        Rig rig(5);
        rig.cfg.train.epochs = {1, 2, 1, 2};
        Trainer tr = rig.trainer();
        tr.run();
        std::vector<double> out;
        for (const auto& r : tr.metrics()) out.push_back(r.loss);
        out.push_back(rig.model->predict(rig.data.validation.front().motion.diffs));
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("stage errors carry the stage name") {
    Rig rig(6);
    rig.bank.pools.clear();
    Trainer tr = rig.trainer();
    CHECK_THROWS_WITH(tr.run(), doctest::Contains("neutral"));
}

TEST_CASE("stage names round trip") {
    for (Stage s : {Stage::neutral, Stage::emotional, Stage::translators, Stage::regressor, Stage::done})
        CHECK(parse_stage(to_string(s)) == s);
    CHECK(next_stage(Stage::neutral) == Stage::emotional);
    CHECK(next_stage(Stage::regressor) == Stage::done);
}
