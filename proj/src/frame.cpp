#include "cmis/frame.hpp"

#include <cmath>

namespace cmis {

Fltb::Fltb(std::size_t width, std::size_t attn_width, Rng& rng, FltbOptions o)
    : query(width, attn_width, rng),
      key(width, attn_width, rng),
      value(width, attn_width, rng),
      project(attn_width, width, rng),
      norm(width),
      opts(o) {}

Var Fltb::forward(Tape& t, Var x, Var* gate_out) {
    if (x.cols() != width())
        throw ShapeError("fltb: input width " + std::to_string(x.cols()) + ", expected " + std::to_string(width()));
    Var q = query.forward(t, x);
    Var k = key.forward(t, x);
    Var v = value.forward(t, x);
    Var score = ag::row_dot(q, k);
    if (opts.scale_scores) score = ag::scale(score, 1.0 / std::sqrt(static_cast<double>(q.cols())));
    Var alpha = ag::sigmoid(score);
    if (gate_out) *gate_out = alpha;
    Var f_temp = ag::scale_rows(v, alpha);
    Var f_proj = project.forward(t, f_temp);
    Var residual = ag::add(f_proj, x);
    return opts.layer_norm ? norm.forward(t, residual) : residual;
}

void Fltb::collect(ParamList& out, const std::string& prefix) {
    query.collect(out, prefix + ".query");
    key.collect(out, prefix + ".key");
    value.collect(out, prefix + ".value");
    project.collect(out, prefix + ".project");
    norm.collect(out, prefix + ".norm");
}

FrameEncoder::FrameEncoder(const FrameEncoderOptions& o, Rng& rng)
    : mlp_({o.input_width, o.width, o.width}, o.activation, rng, /*activate_last=*/true),
      gate_(o.width, o.attn_width, rng, o.gate) {}

Var FrameEncoder::forward(Tape& t, Var motion) {
    if (motion.cols() != input_width())
        throw ShapeError("frame encoder: motion width " + std::to_string(motion.cols()) + ", expected " +
                         std::to_string(input_width()));
    return gate_.forward(t, mlp_.forward(t, motion));
}

FrameFeatures FrameEncoder::encode(const MotionSequence& motion) {
    Tape t(false);
    return {forward(t, t.constant(motion.diffs)).value()};
}

void FrameEncoder::collect(ParamList& out, const std::string& prefix) {
    mlp_.collect(out, prefix + ".mlp");
    gate_.collect(out, prefix + ".gate");
}

FrameTranslator::FrameTranslator(std::size_t width, std::size_t attn_width, Rng& rng, FltbOptions opts) {
    for (auto& b : blocks_) b = Fltb(width, attn_width, rng, opts);
}

Var FrameTranslator::forward(Tape& t, Var emotional) {
    Var x = emotional;
    for (auto& b : blocks_) x = b.forward(t, x);
    return x;
}

FrameFeatures FrameTranslator::translate(const FrameFeatures& emotional) {
    Tape t(false);
    return {forward(t, t.constant(emotional.values)).value()};
}

void FrameTranslator::collect(ParamList& out, const std::string& prefix) {
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(out, prefix + ".blocks." + std::to_string(i));
}

}  // namespace cmis
