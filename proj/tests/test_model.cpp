#include <doctest.h>

#include "cmis/losses.hpp"
#include "cmis/model.hpp"
#include "support.hpp"

using namespace cmis;
using cmis::test::grad_check;
using cmis::test::random_matrix;

namespace {

ModelConfig small_model(std::size_t input = 5) {
    ModelConfig mc;
    mc.input_width = input;
    mc.frame_width = 4;
    mc.frame_attn_width = 3;
    mc.seq_width = 4;
    mc.seq_layers = 1;
    mc.seq_heads = 2;
    mc.seq_ffn_width = 5;
    mc.translator_hidden = 3;
    mc.tap_width = 3;
    mc.regressor_hidden = 3;
    mc.regressor_layers = 1;
    return mc;
}

std::set<ModuleId> present(const CmisModel& m) {
    std::set<ModuleId> out;
    for (ModuleId id : kAllModules)
        if (m.has(id)) out.insert(id);
    return out;
}

}  // namespace

TEST_CASE("module presence follows the component list") {
    using M = ModuleId;
    const std::vector<std::pair<std::string, std::set<M>>> cases{
        {"FLE+FLT+SLE+SLT", {M::flne, M::flee, M::flt, M::slne, M::slee, M::slt, M::tap, M::r_hat, M::r}},
        {"FLE+SLE", {M::flee, M::slee, M::tap, M::r_hat, M::r}},
        {"FLE+FLT", {M::flne, M::flee, M::flt, M::tap, M::r_hat, M::r}},
        {"FLE+FLT+SLE", {M::flne, M::flee, M::flt, M::slee, M::tap, M::r_hat, M::r}},
        {"FLE+SLE+SLT", {M::flne, M::flee, M::slne, M::slee, M::slt, M::tap, M::r_hat, M::r}},
        {"SLE+SLT", {M::slne, M::slee, M::slt, M::tap, M::r_hat, M::r}},
        {"SLE", {M::slee, M::tap, M::r_hat, M::r}},
        {"FLE", {M::flee, M::tap, M::r_hat, M::r}},
    };
    for (const auto& [comps, expected] : cases) {
        CAPTURE(comps);
        CmisModel m(small_model(), AblationSpec::from_components(comps), 1);
        CHECK(present(m) == expected);
    }
    AblationSpec global = AblationSpec::from_components("FLE+SLE+R");
    global.pooling = Pooling::global;
    CHECK_FALSE(CmisModel(small_model(), global, 1).has(ModuleId::tap));
}

TEST_CASE("sequence-only models read raw motion") {
    CmisModel m(small_model(7), AblationSpec::from_components("SLE+SLT"), 1);
    CHECK(m.slee->input_width() == 7);
    CHECK(m.slne->input_width() == 7);
    CmisModel fm(small_model(7), AblationSpec::from_components("FLE+SLE"), 1);
    CHECK(fm.slee->input_width() == 4);
    CHECK(CmisModel(small_model(7), AblationSpec::from_components("FLE"), 1).head_width() == 4);
}

TEST_CASE("invalid component sets are rejected") {
    for (const char* bad : {"FLT", "SLT", "FLT+SLE", "FLE+SLT", ""}) {
        CAPTURE(bad);
        CHECK_THROWS(AblationSpec::from_components(bad).validate());
    }
    CHECK_THROWS(AblationSpec::from_components("FLE+XYZ"));
    CHECK(AblationSpec::from_components("FLE+FLT+SLE+SLT+R") == AblationSpec{});
    CHECK(AblationSpec{}.components() == "FLE+FLT+SLE+SLT");
}

TEST_CASE("full pipeline shapes") {
    ModelConfig mc = small_model(136);
    CmisModel m(mc, AblationSpec{}, 2);
    Rng rng(3);
    const Matrix motion = random_matrix(74, 136, rng, 0.1);
    Tape t(false);
    ForwardOptions fo;
    const EmotionalTrace tr = m.emotional(t, motion, fo);
    CHECK(tr.frame_emotional->rows() == 74);
    CHECK(tr.frame_emotional->cols() == 4);
    CHECK(tr.frame_neutral_hat->cols() == 4);
    CHECK(tr.seq_neutral_hat->rows() == 74);
    CHECK(tr.features.rows() == 74);
    CHECK(tr.features.cols() == 4);
    CHECK(tr.pooled.rows() == 1);
    CHECK(tr.prediction.rows() == 1);
    CHECK(tr.prediction.cols() == 1);
    CHECK(max_abs_diff(tr.features.value(), tr.seq_emotional->value() - tr.seq_neutral_hat->value()) < 1e-15);
    const NeutralTrace nt = m.neutral(t, motion);
    CHECK(nt.frame->rows() == 74);
    CHECK(nt.seq->cols() == 4);
}

TEST_CASE("the translator-free cascade is FLEE, SLEE, pooling and R") {
    CmisModel m(small_model(), AblationSpec::from_components("FLE+SLE"), 4);
    Rng rng(5);
    const Matrix x = random_matrix(6, 5, rng);
    Tape t(false);
    const EmotionalTrace tr = m.emotional(t, x, {});
    CHECK_FALSE(tr.frame_neutral_hat);
    CHECK_FALSE(tr.seq_neutral_hat);
    // Rebuild the graph by hand from the modules.
    Var f = m.flee->forward(t, t.constant(x));
    Var s = m.slee->forward(t, f);
    Var y = m.r.forward(t, m.tap->forward(t, s));
    CHECK(max_abs_diff(tr.features.value(), s.value()) == 0.0);
    CHECK(tr.prediction.value() == y.value());
}

TEST_CASE("translators off bypass standardization") {
    CmisModel m(small_model(), AblationSpec{}, 6);
    Rng rng(7);
    const Matrix x = random_matrix(6, 5, rng);
    Tape t(false);
    ForwardOptions fo;
    fo.translators = false;
    const EmotionalTrace tr = m.emotional(t, x, fo);
    CHECK_FALSE(tr.seq_neutral_hat);
    CHECK(tr.features.value() == tr.seq_emotional->value());
}

TEST_CASE("neutral encoders start as copies of the emotional encoders") {
    CmisModel m(small_model(), AblationSpec{}, 8);
    ParamList flne = m.parameters(ModuleId::flne), flee = m.parameters(ModuleId::flee);
    REQUIRE(flne.size() == flee.size());
    for (std::size_t i = 0; i < flne.size(); ++i) CHECK(flne[i].second->value == flee[i].second->value);
    ModelConfig mc = small_model();
    mc.mirror_neutral_init = false;
    CmisModel m2(mc, AblationSpec{}, 8);
    CHECK_FALSE(m2.parameters(ModuleId::slne)[0].second->value == m2.parameters(ModuleId::slee)[0].second->value);
}

TEST_CASE("parameter bookkeeping") {
    CmisModel m(small_model(), AblationSpec{}, 9);
    std::size_t total = 0;
    for (ModuleId id : kAllModules) {
        const ParamList p = m.parameters(id);
        for (const auto& [name, _] : p) CHECK(name.rfind(to_string(id) + ".", 0) == 0);
        total += p.size();
    }
    CHECK(total == m.parameters().size());

    m.set_trainable({ModuleId::flt});
    for (ModuleId id : kAllModules)
        for (const auto& [_, p] : m.parameters(id)) CHECK(p->frozen == (id != ModuleId::flt));

    m.drop_pretrain_head();
    CHECK_FALSE(m.has(ModuleId::r_hat));
    CHECK(m.parameters(ModuleId::r_hat).empty());
    for (ModuleId id : kAllModules) CHECK(parse_module_id(to_string(id)) == id);
}

TEST_CASE("eval predictions are deterministic and ignore augmentation") {
    CmisModel m(small_model(), AblationSpec{}, 10);
    Rng rng(11);
    const Matrix x = random_matrix(6, 5, rng);
    const double a = m.predict(x);
    IdaConfig ida;
    ida.noise_std = 1.0;
    ida.mask_prob = 0.5;
    Rng draw(1);
    Tape t(false);
    ForwardOptions fo;
    fo.mode = Mode::eval;
    fo.ida = &ida;
    fo.rng = &draw;
    CHECK(m.emotional(t, x, fo).prediction.value()(0, 0) == a);
    CHECK(m.predict(x) == a);
    fo.mode = Mode::train;
    CHECK(m.emotional(t, x, fo).prediction.value()(0, 0) != a);
}

TEST_CASE("whole-model gradients match central differences") {
    ModelConfig mc = small_model(4);
    mc.activation = Activation::tanh;
    Rng rng(12);
    const Matrix x = random_matrix(3, 4, rng);
    for (auto kind : {TranslatorKind::ed_lstm, TranslatorKind::ed_gru, TranslatorKind::attention})
        for (bool pretrain : {false, true}) {
            CAPTURE(to_string(kind));
            CAPTURE(pretrain);
            AblationSpec spec;
            spec.translator = kind;
            CmisModel m(mc, spec, 13);
            const auto r = grad_check(m.parameters(), [&](Tape& t) {
                ForwardOptions fo;
                fo.pretrain_head = pretrain;
                return loss_mse(m.emotional(t, x, fo).prediction, 0.7);
            });
            CHECK_MESSAGE(r.worst < 1e-4, r.block);
        }
}

TEST_CASE("model config validation") {
    ModelConfig mc = small_model();
    mc.seq_heads = 3;
    CHECK_THROWS(validate(mc));
    mc = small_model();
    mc.frame_width = 0;
    CHECK_THROWS(validate(mc));
    CHECK_NOTHROW(validate(small_model()));
}
