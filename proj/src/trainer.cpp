#include "cmis/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cmis/synth.hpp"

namespace cmis {

std::string to_string(Stage s) {
    switch (s) {
        case Stage::neutral: return "neutral";
        case Stage::emotional: return "emotional";
        case Stage::translators: return "translators";
        case Stage::regressor: return "regressor";
        case Stage::done: return "done";
    }
    return "?";
}

Stage parse_stage(const std::string& s) {
    for (Stage st : {Stage::neutral, Stage::emotional, Stage::translators, Stage::regressor, Stage::done})
        if (to_string(st) == s) return st;
    throw std::invalid_argument("unknown stage '" + s + "'");
}

Stage next_stage(Stage s) {
    return s == Stage::done ? Stage::done : static_cast<Stage>(static_cast<int>(s) + 1);
}

std::size_t StageBudget::of(Stage s) const {
    switch (s) {
        case Stage::neutral: return neutral;
        case Stage::emotional: return emotional;
        case Stage::translators: return translators;
        case Stage::regressor: return regressor;
        case Stage::done: return 0;
    }
    return 0;
}

void validate(const TrainConfig& c) {
    if (c.batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    if (!(c.lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
    if (c.lr_decay_every == 0) throw std::invalid_argument("train: lr_decay_every must be positive");
    if (!(c.lr_decay_factor > 0.0)) throw std::invalid_argument("train: lr_decay_factor must be positive");
    if (c.momentum < 0.0 || c.momentum >= 1.0) throw std::invalid_argument("train: momentum must lie in [0,1)");
    if (c.weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be non-negative");
    if (c.n_neutral < 2) throw std::invalid_argument("train: n_neutral must be at least 2");
}

double learning_rate(const TrainConfig& c, std::size_t epoch) {
    return c.lr * std::pow(c.lr_decay_factor, static_cast<double>(epoch / c.lr_decay_every));
}

void sgd_step(const ParamList& params, double lr, double momentum, double weight_decay) {
    for (const auto& [_, p] : params) {
        if (p->frozen) continue;
        if (p->momentum.empty()) p->momentum = Matrix(p->value.rows(), p->value.cols());
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i] + weight_decay * p->value[i];
            p->momentum[i] = momentum * p->momentum[i] + g;
            p->value[i] -= lr * p->momentum[i];
        }
    }
}

void zero_grads(const ParamList& params) {
    for (const auto& [_, p] : params) p->zero_grad();
}

void reset_momentum(const ParamList& params) {
    for (const auto& [_, p] : params) p->momentum = Matrix(p->value.rows(), p->value.cols());
}

std::string format_metrics(const std::vector<MetricsRow>& rows) {
    std::ostringstream out;
    out << kMetricsHeader << '\n';
    for (const auto& r : rows)
        out << r.stage << ',' << r.epoch << ',' << r.split << ',' << format_double(r.loss) << ','
            << format_double(r.mse) << ',' << format_double(r.lr) << ',' << format_double(r.wall_clock_s) << '\n';
    return out.str();
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics log " + path.string());
    out << format_metrics(rows);
}

namespace {

constexpr std::uint64_t kShuffleTag = 0x5eed;
constexpr std::uint64_t kIdaTag = 0x1da;
constexpr std::uint64_t kValidationTag = 0x7a1;

}  // namespace

Trainer::Trainer(CmisModel& model, const Dataset& data, const NeutralBank& bank, const TrainConfig& cfg,
                 const IdaConfig& ida)
    : model_(model), data_(data), bank_(bank), cfg_(cfg), ida_(ida), start_(std::chrono::steady_clock::now()) {
    validate(cfg_);
    validate(ida_);
}

bool Trainer::stage_active(Stage s) const {
    switch (s) {
        case Stage::neutral: return model_.has(ModuleId::flne) || model_.has(ModuleId::slne);
        case Stage::translators: return model_.has(ModuleId::flt) || model_.has(ModuleId::slt);
        case Stage::emotional:
        case Stage::regressor: return true;
        case Stage::done: return false;
    }
    return false;
}

std::set<ModuleId> Trainer::trainable(Stage s) const {
    switch (s) {
        case Stage::neutral: return {ModuleId::flne, ModuleId::slne};
        case Stage::emotional: return {ModuleId::flee, ModuleId::slee, ModuleId::r_hat};
        case Stage::translators: return {ModuleId::flt, ModuleId::slt};
        case Stage::regressor: return {ModuleId::tap, ModuleId::r};
        case Stage::done: return {};
    }
    return {};
}

std::vector<std::size_t> Trainer::eligible(Stage s, const std::vector<Sample>& samples) const {
    std::vector<std::size_t> out;
    const bool needs_bank = s == Stage::neutral || s == Stage::translators;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (!needs_bank || bank_.covers(samples[i].individual_id())) out.push_back(i);
    return out;
}

namespace {

struct Objective {
    Var loss;
    double mse = std::numeric_limits<double>::quiet_NaN();
};

Objective stage_objective(CmisModel& m, Tape& t, Stage s, const Sample& sample, const NeutralBank& bank,
                                 const TrainConfig& cfg, const IdaConfig& ida, std::uint64_t draw_seed, Mode mode,
                                 Rng* rng) {
    const Matrix& x = sample.motion.diffs;
    Objective out;
    switch (s) {
        case Stage::neutral: {
            auto draws = draw_neutrals(bank, sample.individual_id(), cfg.n_neutral, draw_seed);
            std::vector<Var> frames, seqs;
            for (const auto& d : draws) {
                NeutralTrace tr = m.neutral(t, d.motion.diffs);
                if (tr.frame) frames.push_back(*tr.frame);
                if (tr.seq) seqs.push_back(*tr.seq);
            }
            std::vector<Var> parts;
            if (!frames.empty()) parts.push_back(loss_neutral_approx(frames));
            if (!seqs.empty()) parts.push_back(loss_neutral_approx(seqs));
            Var total = parts.front();
            for (std::size_t i = 1; i < parts.size(); ++i) total = ag::add(total, parts[i]);
            out.loss = total;
            break;
        }
        case Stage::emotional:
        case Stage::regressor: {
            ForwardOptions fo;
            fo.mode = mode;
            fo.translators = s == Stage::regressor;
            fo.pretrain_head = s == Stage::emotional;
            fo.ida = &ida;
            fo.rng = rng;
            EmotionalTrace tr = m.emotional(t, x, fo);
            out.loss = loss_mse(tr.prediction, sample.label);
            out.mse = out.loss.value()(0, 0);
            break;
        }
        case Stage::translators: {
            auto draws = draw_neutrals(bank, sample.individual_id(), cfg.n_neutral, draw_seed);
            Matrix frame_bench, seq_bench;
            {
                Tape nt(false);
                std::vector<Var> frames, seqs;
                for (const auto& d : draws) {
                    NeutralTrace tr = m.neutral(nt, d.motion.diffs);
                    if (tr.frame) frames.push_back(*tr.frame);
                    if (tr.seq) seqs.push_back(*tr.seq);
                }
                if (!frames.empty()) frame_bench = ag::average(frames).value();
                if (!seqs.empty()) seq_bench = ag::average(seqs).value();
            }
            ForwardOptions fo;
            fo.mode = mode;
            fo.translators = true;
            fo.detach_between_scales = true;
            fo.ida = cfg.ida_in_translator_stage ? &ida : nullptr;
            fo.rng = rng;
            EmotionalTrace tr = m.emotional(t, x, fo);
            std::vector<Var> parts;
            if (tr.frame_neutral_hat) parts.push_back(loss_translator(t.constant(frame_bench), *tr.frame_neutral_hat));
            if (tr.seq_neutral_hat) parts.push_back(loss_translator(t.constant(seq_bench), *tr.seq_neutral_hat));
            Var total = parts.front();
            for (std::size_t i = 1; i < parts.size(); ++i) total = ag::add(total, parts[i]);
            out.loss = total;
            break;
        }
        case Stage::done: throw std::logic_error("no objective after the last stage");
    }
    out.loss = signed_loss(out.loss, cfg.sign);
    return out;
}

}  // namespace

void Trainer::begin_stage(Stage s) {
    model_.set_trainable(trainable(s));
    const ParamList params = model_.parameters();
    zero_grads(params);
    if (progress_.epoch == 0) reset_momentum(params);
}

void Trainer::end_stage(Stage s) {
    switch (s) {
        case Stage::neutral:
            model_.set_frozen(ModuleId::flne, true);
            model_.set_frozen(ModuleId::slne, true);
            break;
        case Stage::emotional:
            model_.set_frozen(ModuleId::flee, true);
            model_.set_frozen(ModuleId::slee, true);
            model_.drop_pretrain_head();
            break;
        case Stage::translators:
            model_.set_frozen(ModuleId::flt, true);
            model_.set_frozen(ModuleId::slt, true);
            break;
        case Stage::regressor:
        case Stage::done: break;
    }
}

EpochStats Trainer::run_epoch(Stage s, std::size_t epoch) {
    const auto stage_tag = static_cast<std::uint64_t>(s);
    const double lr = learning_rate(cfg_, epoch);
    std::vector<std::size_t> order = eligible(s, data_.train);
    if (order.empty())
        throw std::runtime_error("stage " + to_string(s) + ": no eligible training samples");
    {
        Rng shuffle = make_rng(cfg_.seed, {stage_tag, epoch, kShuffleTag});
        std::shuffle(order.begin(), order.end(), shuffle);
    }
    EpochStats stats;
    if (s == Stage::translators) {
        stats.skipped = data_.train.size() - order.size();
        skipped_ = stats.skipped;
    }

    const ParamList params = model_.parameters();
    double loss_sum = 0.0, mse_sum = 0.0;
    std::size_t count = 0, batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg_.batch_size) {
        if (cfg_.max_batches_per_epoch && batches == cfg_.max_batches_per_epoch) break;
        const std::size_t end = std::min(order.size(), begin + cfg_.batch_size);
        zero_grads(params);
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t idx = order[k];
            Rng rng = make_rng(cfg_.seed, {stage_tag, epoch, idx, kIdaTag});
            Tape t(true);
            Objective obj = stage_objective(model_, t, s, data_.train[idx], bank_, cfg_, ida_,
                                            derive_seed(cfg_.seed, {stage_tag, epoch, idx}), Mode::train, &rng);
            loss_sum += obj.loss.value()(0, 0);
            mse_sum += obj.mse;
            ++count;
            t.backward(obj.loss, 1.0 / static_cast<double>(end - begin));
        }
        sgd_step(params, lr, cfg_.momentum, cfg_.weight_decay);
        ++batches;
    }
    stats.train_loss = loss_sum / static_cast<double>(count);
    stats.validation_loss = measure(s, data_.validation, kValidationTag);

    const double wall =
        wall_offset_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const bool regression = s == Stage::emotional || s == Stage::regressor;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto unsigned_loss = [&](double v) { return cfg_.sign == LossSign::literal ? -v : v; };
    metrics_.push_back({to_string(s), epoch, "train", stats.train_loss,
                        regression ? mse_sum / static_cast<double>(count) : nan, lr, wall});
    metrics_.push_back({to_string(s), epoch, "validation", stats.validation_loss,
                        regression ? unsigned_loss(stats.validation_loss) : nan, lr, wall});
    return stats;
}

double Trainer::measure(Stage s, const std::vector<Sample>& samples, std::uint64_t draw_tag) const {
    const std::vector<std::size_t> idx = eligible(s, samples);
    if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sum = 0.0;
    for (std::size_t i : idx) {
        Tape t(false);
        Objective obj = stage_objective(model_, t, s, samples[i], bank_, cfg_, ida_,
                                        derive_seed(cfg_.seed, {static_cast<std::uint64_t>(s), draw_tag, i}),
                                        Mode::eval, nullptr);
        sum += obj.loss.value()(0, 0);
    }
    return sum / static_cast<double>(idx.size());
}

void Trainer::run_stage(Stage s) {
    if (progress_.stage != s) progress_ = {s, 0};
    if (stage_active(s)) {
        if ((s == Stage::neutral) && bank_.total() == 0)
            throw std::runtime_error("stage neutral: neutral bank is empty");
        begin_stage(s);
        const std::size_t budget = cfg_.epochs.of(s);
        while (progress_.epoch < budget) {
            run_epoch(s, progress_.epoch);
            ++progress_.epoch;
            if (progress_.epoch < budget && hook_) hook_(*this);
        }
    }
    end_stage(s);
    progress_ = {next_stage(s), 0};
    if (hook_) hook_(*this);
}

void Trainer::run() {
    while (progress_.stage != Stage::done) {
        try {
            run_stage(progress_.stage);
        } catch (const std::exception& e) {
            const std::string msg = e.what();
            const std::string name = to_string(progress_.stage);
            if (msg.rfind("stage ", 0) == 0) throw;
            throw std::runtime_error("stage " + name + ": " + msg);
        }
    }
    model_.set_trainable({});
}

void Trainer::restore(const Progress& p, std::vector<MetricsRow> metrics) {
    progress_ = p;
    metrics_ = std::move(metrics);
    wall_offset_ = metrics_.empty() ? 0.0 : metrics_.back().wall_clock_s;
    start_ = std::chrono::steady_clock::now();
}

}  // namespace cmis
