#include "cmis/model.hpp"

#include <sstream>
#include <stdexcept>

namespace cmis {

std::string to_string(ModuleId m) {
    switch (m) {
        case ModuleId::flne: return "flne";
        case ModuleId::flee: return "flee";
        case ModuleId::flt: return "flt";
        case ModuleId::slne: return "slne";
        case ModuleId::slee: return "slee";
        case ModuleId::slt: return "slt";
        case ModuleId::tap: return "tap";
        case ModuleId::r_hat: return "r_hat";
        case ModuleId::r: return "r";
    }
    return "?";
}

ModuleId parse_module_id(const std::string& s) {
    for (ModuleId m : kAllModules)
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown module '" + s + "'");
}

std::string to_string(Pooling p) { return p == Pooling::tap ? "tap" : "global"; }

std::string to_string(IdaPlacement p) {
    switch (p) {
        case IdaPlacement::none: return "none";
        case IdaPlacement::flee: return "flee";
        case IdaPlacement::slee: return "slee";
        case IdaPlacement::both: return "both";
    }
    return "?";
}

Pooling parse_pooling(const std::string& s) {
    if (s == "tap") return Pooling::tap;
    if (s == "global") return Pooling::global;
    throw std::invalid_argument("unknown pooling '" + s + "'");
}

IdaPlacement parse_ida_placement(const std::string& s) {
    if (s == "none") return IdaPlacement::none;
    if (s == "flee") return IdaPlacement::flee;
    if (s == "slee") return IdaPlacement::slee;
    if (s == "both") return IdaPlacement::both;
    throw std::invalid_argument("unknown ida placement '" + s + "'");
}

std::string AblationSpec::components() const {
    std::string out;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!out.empty()) out += "+";
        out += name;
    };
    add(fle, "FLE");
    add(flt, "FLT");
    add(sle, "SLE");
    add(slt, "SLT");
    return out;
}

void AblationSpec::validate() const {
    if (flt && !fle) throw std::invalid_argument("ablation spec: FLT requires FLE");
    if (slt && !sle) throw std::invalid_argument("ablation spec: SLT requires SLE");
    if (!fle && !sle) throw std::invalid_argument("ablation spec: at least one encoder (FLE or SLE) is required");
}

AblationSpec AblationSpec::from_components(const std::string& list) {
    AblationSpec s;
    s.fle = s.flt = s.sle = s.slt = false;
    std::istringstream in(list);
    std::string tok;
    while (std::getline(in, tok, '+')) {
        if (tok == "FLE") s.fle = true;
        else if (tok == "FLT") s.flt = true;
        else if (tok == "SLE") s.sle = true;
        else if (tok == "SLT") s.slt = true;
        else if (tok == "R") continue;
        else throw std::invalid_argument("unknown component '" + tok + "' in '" + list + "'");
    }
    return s;
}

void validate(const ModelConfig& c) {
    if (c.input_width == 0 || c.frame_width == 0 || c.seq_width == 0 || c.frame_attn_width == 0 || c.tap_width == 0 ||
        c.translator_hidden == 0 || c.regressor_hidden == 0)
        throw std::invalid_argument("model: widths must be positive");
    if (c.seq_heads == 0 || c.seq_width % c.seq_heads != 0)
        throw std::invalid_argument("model: seq_width must be divisible by seq_heads");
}

namespace {
// Module init streams; neutral encoders can borrow their twin's stream.
std::uint64_t init_tag(ModuleId m) { return 0x1000 + static_cast<std::uint64_t>(m); }
}  // namespace

CmisModel::CmisModel(const ModelConfig& cfg, const AblationSpec& spec, std::uint64_t seed) : cfg_(cfg), spec_(spec) {
    validate(cfg);
    spec.validate();
    auto rng_for = [&](ModuleId m) { return make_rng(seed, {init_tag(m)}); };

    const bool need_flne = spec.fle && (spec.flt || (spec.sle && spec.slt));
    const bool need_slne = spec.sle && spec.slt;

    FrameEncoderOptions fo;
    fo.input_width = cfg.input_width;
    fo.width = cfg.frame_width;
    fo.attn_width = cfg.frame_attn_width;
    fo.activation = cfg.activation;
    fo.gate.scale_scores = cfg.fltb_scale_scores;
    if (spec.fle) {
        Rng r1 = rng_for(ModuleId::flee);
        flee.emplace(fo, r1);
        if (need_flne) {
            Rng r2 = rng_for(cfg.mirror_neutral_init ? ModuleId::flee : ModuleId::flne);
            flne.emplace(fo, r2);
        }
        if (spec.flt) {
            Rng r3 = rng_for(ModuleId::flt);
            flt.emplace(cfg.frame_width, cfg.frame_attn_width, r3, fo.gate);
        }
    }

    SequenceEncoderOptions so;
    so.input_width = spec.fle ? cfg.frame_width : cfg.input_width;
    so.width = cfg.seq_width;
    so.layers = cfg.seq_layers;
    so.heads = cfg.seq_heads;
    so.ffn_width = cfg.seq_ffn_width;
    so.positional = cfg.positional;
    so.activation = cfg.activation;
    if (spec.sle) {
        Rng r1 = rng_for(ModuleId::slee);
        slee.emplace(so, r1);
        if (need_slne) {
            Rng r2 = rng_for(cfg.mirror_neutral_init ? ModuleId::slee : ModuleId::slne);
            slne.emplace(so, r2);
        }
        if (spec.slt) {
            Rng r3 = rng_for(ModuleId::slt);
            slt.emplace(spec.translator, cfg.seq_width, cfg.translator_hidden, r3);
        }
    }

    const std::size_t hw = head_width();
    if (spec.pooling == Pooling::tap) {
        Rng rt = rng_for(ModuleId::tap);
        tap.emplace(hw, cfg.tap_width, rt, TapOptions{cfg.tap_tanh, std::nullopt});
    }
    Rng rh = rng_for(ModuleId::r_hat);
    r_hat.emplace(hw, cfg.regressor_hidden, cfg.regressor_layers, cfg.activation, rh);
    Rng rr = rng_for(ModuleId::r);
    r = Regressor(hw, cfg.regressor_hidden, cfg.regressor_layers, cfg.activation, rr);
}

std::size_t CmisModel::head_width() const { return spec_.sle ? cfg_.seq_width : cfg_.frame_width; }

EmotionalTrace CmisModel::emotional(Tape& t, const Matrix& motion, const ForwardOptions& o) {
    if (motion.cols() != cfg_.input_width)
        throw ShapeError("model: motion width " + std::to_string(motion.cols()) + ", expected " +
                         std::to_string(cfg_.input_width));
    const bool augment = o.mode == Mode::train && o.ida != nullptr && o.rng != nullptr;
    EmotionalTrace tr;
    Var x = t.constant(motion);
    if (flee) {
        Var f = flee->forward(t, x);
        if (augment && o.ida->enabled_after_flee) f = ida_apply(t, f, *o.ida, o.mode, *o.rng);
        tr.frame_emotional = f;
        if (flt && o.translators) {
            Var n_hat = flt->forward(t, f);
            tr.frame_neutral_hat = n_hat;
            f = ag::sub(f, n_hat);
        }
        x = o.detach_between_scales ? ag::detach(f) : f;
    }
    if (slee) {
        Var s = slee->forward(t, x);
        if (augment && o.ida->enabled_after_slee) s = ida_apply(t, s, *o.ida, o.mode, *o.rng);
        tr.seq_emotional = s;
        if (slt && o.translators) {
            Var n_hat = slt->forward(t, s);
            tr.seq_neutral_hat = n_hat;
            s = ag::sub(s, n_hat);
        }
        x = s;
    }
    tr.features = x;
    if (o.pretrain_head) {
        if (!r_hat) throw std::logic_error("model: temporary head R̂ has been removed");
        tr.pooled = global_pool(x);
        tr.prediction = r_hat->forward(t, tr.pooled);
    } else {
        tr.pooled = tap ? tap->forward(t, x) : global_pool(x);
        tr.prediction = r.forward(t, tr.pooled);
    }
    return tr;
}

NeutralTrace CmisModel::neutral(Tape& t, const Matrix& motion) {
    NeutralTrace tr;
    Var x = t.constant(motion);
    if (flne) {
        x = flne->forward(t, x);
        tr.frame = x;
    }
    if (slne) tr.seq = slne->forward(t, x);
    return tr;
}

double CmisModel::predict(const Matrix& motion) {
    Tape t(false);
    return emotional(t, motion, ForwardOptions{}).prediction.value()(0, 0);
}

bool CmisModel::has(ModuleId m) const {
    switch (m) {
        case ModuleId::flne: return flne.has_value();
        case ModuleId::flee: return flee.has_value();
        case ModuleId::flt: return flt.has_value();
        case ModuleId::slne: return slne.has_value();
        case ModuleId::slee: return slee.has_value();
        case ModuleId::slt: return slt.has_value();
        case ModuleId::tap: return tap.has_value();
        case ModuleId::r_hat: return r_hat.has_value();
        case ModuleId::r: return true;
    }
    return false;
}

ParamList CmisModel::parameters(ModuleId m) {
    ParamList out;
    const std::string p = to_string(m);
    switch (m) {
        case ModuleId::flne: if (flne) flne->collect(out, p); break;
        case ModuleId::flee: if (flee) flee->collect(out, p); break;
        case ModuleId::flt: if (flt) flt->collect(out, p); break;
        case ModuleId::slne: if (slne) slne->collect(out, p); break;
        case ModuleId::slee: if (slee) slee->collect(out, p); break;
        case ModuleId::slt: if (slt) slt->collect(out, p); break;
        case ModuleId::tap: if (tap) tap->collect(out, p); break;
        case ModuleId::r_hat: if (r_hat) r_hat->collect(out, p); break;
        case ModuleId::r: r.collect(out, p); break;
    }
    return out;
}

ParamList CmisModel::parameters() {
    ParamList out;
    for (ModuleId m : kAllModules) {
        auto part = parameters(m);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

void CmisModel::set_trainable(const std::set<ModuleId>& trainable) {
    for (ModuleId m : kAllModules)
        for (auto& [_, p] : parameters(m)) p->frozen = !trainable.contains(m);
}

bool CmisModel::frozen(ModuleId m) const { return frozen_.contains(m); }

void CmisModel::set_frozen(ModuleId m, bool on) {
    if (on) frozen_.insert(m);
    else frozen_.erase(m);
}

void CmisModel::drop_pretrain_head() { r_hat.reset(); }

}  // namespace cmis
