#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cmis/checkpoint.hpp"
#include "cmis/evaluation.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace cmis;
using cmis::test::TempDir;
using cmis::test::tiny_config;

namespace {

KeyValues parse(const std::string& text) {
    std::istringstream in(text);
    return parse_key_values(in, "inline");
}

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("key-value parsing") {
    const KeyValues kv = parse("# comment\n  train.lr = 0.05  # trailing\n\nmodel.seq_layers=2\n");
    CHECK(kv.size() == 2);
    CHECK(kv.at("train.lr") == "0.05");
    CHECK(kv.at("model.seq_layers") == "2");
    CHECK_THROWS_WITH_AS(parse("a = 1\nno equals sign\n"), doctest::Contains("inline:2"), ConfigError);
    CHECK_THROWS_AS(parse("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse(" = 2\n"), ConfigError);
}

TEST_CASE("typed config errors name the key") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_key_values({{"train.nope", "1"}}), doctest::Contains("train.nope"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_key_values({{"train.lr", "fast"}}), doctest::Contains("train.lr"),
                         ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_key_values({{"train.batch_size", "-3"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_key_values({{"ablation.translator", "gru9"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_key_values({{"model.seq_heads", "3"}}).validate(), ConfigError);
}

TEST_CASE("a uniform epoch count is split across the stages") {
    const ExperimentConfig c = ExperimentConfig::from_key_values({{"train.epochs", "100"}});
    CHECK(c.train.epochs.total() == 100);
    const ExperimentConfig d = ExperimentConfig::from_key_values({{"train.epochs", "8"}, {"train.epochs.regressor", "5"}});
    CHECK(d.train.epochs.regressor == 5);
    CHECK(d.train.epochs.neutral == 2);
}

TEST_CASE("canonical text round trips and the hash tracks content") {
    const ExperimentConfig a = tiny_config(3);
    const ExperimentConfig b = ExperimentConfig::from_key_values(a.to_key_values());
    CHECK(a.canonical() == b.canonical());
    CHECK(a.hash() == b.hash());
    CHECK(a.hash_hex().size() == 16);
    ExperimentConfig c = a;
    c.train.lr *= 1.0 + 1e-12;
    CHECK(c.hash() != a.hash());
    CHECK(ExperimentConfig::from_key_values(c.to_key_values()).train.lr == c.train.lr);
    CHECK(describe_config_keys().find("train.lr") != std::string::npos);
}

TEST_CASE("config files resolve manifest paths and apply overrides") {
    TempDir dir("cfg");
    std::filesystem::create_directories(dir / "sub");
    write_text(dir / "sub" / "a.cfg", "data.source = manifest\ndata.manifest = ../m.csv\ntrain.lr = 0.2\n");
    const ExperimentConfig c = load_config(dir / "sub" / "a.cfg", {{"train.lr", "0.4"}});
    CHECK(c.train.lr == 0.4);
    CHECK(std::filesystem::weakly_canonical(c.data.manifest) == std::filesystem::weakly_canonical(dir / "m.csv"));
    CHECK_THROWS_AS(load_config(dir / "missing.cfg"), ConfigError);
}

TEST_CASE("full-scale configuration") {
    const ExperimentConfig c = full_scale_config();
    CHECK_NOTHROW(c.validate());
    CHECK(c.model.seq_width == 128);
    CHECK(c.model.seq_layers == 6);
    CHECK(c.model.seq_heads == 4);
    CHECK(c.train.batch_size == 32);
    CHECK(c.train.epochs.total() == 100);
}

TEST_CASE("checkpoint round trip") {
    ExperimentConfig cfg = tiny_config(4);
    const Dataset data = load_experiment_data(cfg);
    const NeutralBank bank = build_neutral_bank(data, cfg.ablation.neutral);
    const ModelConfig mc = cfg.resolved_model(data.width());
    CmisModel model(mc, cfg.ablation, 4);
    cfg.train.epochs = {1, 1, 1, 1};
    Trainer tr(model, data, bank, cfg.train, cfg.effective_ida());
    tr.run_stage(Stage::neutral);

    TempDir dir("ckpt");
    const auto path = dir / "a.ckpt";
    save_checkpoint(path, model, {cfg, mc, 4, tr.progress(), tr.metrics()});
    CHECK_FALSE(std::filesystem::exists(dir / "a.ckpt.tmp"));
    const LoadedCheckpoint ck = load_checkpoint(path);
    CHECK(ck.config_hash == cfg.hash_hex());
    CHECK(ck.state.config.canonical() == cfg.canonical());
    CHECK(ck.state.progress == tr.progress());
    CHECK(ck.state.metrics.size() == tr.metrics().size());
    CHECK(ck.state.seed == 4);
    const ParamList a = model.parameters(), b = ck.model->parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second->value == b[i].second->value);
        CHECK(a[i].second->momentum == b[i].second->momentum);
    }
    // Module-level freezing survives; per-parameter flags are reset by the next stage anyway.
    for (ModuleId id : kAllModules)
        if (model.has(id)) CHECK(model.frozen(id) == ck.model->frozen(id));
    CHECK(ck.model->frozen(ModuleId::flne));
    const Matrix& x = data.validation.front().motion.diffs;
    CHECK(model.predict(x) == ck.model->predict(x));
}

TEST_CASE("damaged checkpoints are rejected") {
    ExperimentConfig cfg = tiny_config(5);
    const ModelConfig mc = cfg.resolved_model(6);
    CmisModel model(mc, cfg.ablation, 5);
    TempDir dir("bad");
    const auto good = dir / "good.ckpt";
    save_checkpoint(good, model, {cfg, mc, 5, {}, {}});
    const std::string bytes = read_text(good);

    std::string magic = bytes;
    magic[0] = 'X';
    write_text(dir / "magic.ckpt", magic);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "magic.ckpt"), doctest::Contains("magic"), CheckpointError);

    std::string version = bytes;
    version[8] = 99;
    write_text(dir / "version.ckpt", version);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "version.ckpt"), doctest::Contains("version"), CheckpointError);

    write_text(dir / "short.ckpt", bytes.substr(0, bytes.size() - 16));
    CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), CheckpointError);
}

TEST_CASE("parameter digests see single-bit changes") {
    Parameter p(Matrix{{1.0, 2.0}});
    const ParamList ps{{"p", &p}};
    const auto d = parameter_digest(ps);
    p.value(0, 1) = std::nextafter(2.0, 3.0);
    CHECK(parameter_digest(ps) != d);
}

TEST_CASE("resuming from a mid-run checkpoint matches an uninterrupted run") {
    ExperimentConfig cfg = tiny_config(6);
    cfg.train.epochs = {2, 2, 2, 2};
    const Dataset data = load_experiment_data(cfg);
    const NeutralBank bank = build_neutral_bank(data, cfg.ablation.neutral);
    const ModelConfig mc = cfg.resolved_model(data.width());
    TempDir dir("resume");

    CmisModel full(mc, cfg.ablation, cfg.train.seed);
    Trainer a(full, data, bank, cfg.train, cfg.effective_ida());
    std::size_t epochs_seen = 0;
    a.set_epoch_hook([&](const Trainer& tr) {
        // Snapshot once the marker sits mid-way through stage 3.
        if (++epochs_seen == 5) save_checkpoint(dir / "mid.ckpt", full, {cfg, mc, cfg.train.seed, tr.progress(), tr.metrics()});
    });
    a.run();

    LoadedCheckpoint ck = load_checkpoint(dir / "mid.ckpt");
    CHECK(ck.state.progress.stage == Stage::translators);
    CHECK(ck.state.progress.epoch == 1);
    Trainer b(*ck.model, data, bank, ck.state.config.train, ck.state.config.effective_ida());
    b.restore(ck.state.progress, ck.state.metrics);
    b.run();

    REQUIRE(a.metrics().size() == b.metrics().size());
    for (std::size_t i = 0; i < a.metrics().size(); ++i) CHECK(std::abs(a.metrics()[i].loss - b.metrics()[i].loss) < 1e-6);
    for (const Sample& s : data.validation)
        CHECK(std::abs(full.predict(s.motion.diffs) - ck.model->predict(s.motion.diffs)) < 1e-6);
}
