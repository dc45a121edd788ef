#include "cmis/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <mutex>
#include <thread>

#include "cmis/synth.hpp"

namespace cmis {

Dataset load_experiment_data(const ExperimentConfig& cfg) {
    if (cfg.data.source == DataSource::synthetic) return generate_synthetic(cfg.synth).data;
    return build_dataset(load_landmark_dataset(cfg.data.manifest, cfg.data.fps), cfg.data.options);
}

NeutralBank build_neutral_bank(const Dataset& data, const NeutralSelection& sel) {
    if (sel.strategy == NeutralStrategy::peak) return select_neutral_peak(data.train, sel.center, sel.edge);
    return select_neutral_nonbackchannel(data.train, data.negatives);
}

Evaluation evaluate_mse(CmisModel& model, const std::vector<Sample>& samples, bool clamp) {
    if (samples.empty()) throw std::invalid_argument("evaluate_mse: empty split");
    Evaluation ev;
    double sum = 0.0;
    for (const Sample& s : samples) {
        double p = model.predict(s.motion.diffs);
        if (clamp) p = std::clamp(p, -1.0, 1.0);
        ev.sample_ids.push_back(s.sample_id());
        ev.labels.push_back(s.label);
        ev.predictions.push_back(p);
        sum += (s.label - p) * (s.label - p);
    }
    ev.mse = sum / static_cast<double>(samples.size());
    return ev;
}

void write_predictions_csv(const std::filesystem::path& path, const Evaluation& ev) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "sample_id,label,prediction\n";
    for (std::size_t i = 0; i < ev.labels.size(); ++i)
        out << ev.sample_ids[i] << ',' << format_double(ev.labels[i]) << ',' << format_double(ev.predictions[i]) << '\n';
}

std::vector<double> density_grid(std::size_t points) {
    if (points < 2) throw std::invalid_argument("density grid needs at least 2 points");
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i) g[i] = -1.2 + 2.4 * static_cast<double>(i) / static_cast<double>(points - 1);
    return g;
}

std::vector<double> kernel_density(const std::vector<double>& values, const std::vector<double>& grid,
                                   double bandwidth) {
    if (values.empty()) throw std::invalid_argument("kernel density of an empty sample");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("kernel density bandwidth must be positive");
    const double norm = 1.0 / (static_cast<double>(values.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double s = 0.0;
        for (double v : values) {
            const double z = (grid[g] - v) / bandwidth;
            s += std::exp(-0.5 * z * z);
        }
        out[g] = s * norm;
    }
    return out;
}

DensityTable export_densities(const std::vector<double>& labels, const std::vector<double>& predictions,
                              double bandwidth, std::size_t points) {
    DensityTable t;
    t.grid = density_grid(points);
    t.labels = kernel_density(labels, t.grid, bandwidth);
    t.predictions = kernel_density(predictions, t.grid, bandwidth);
    return t;
}

void write_density_csv(const std::filesystem::path& path, const DensityTable& t) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "x,label_density,prediction_density\n";
    for (std::size_t i = 0; i < t.grid.size(); ++i)
        out << format_double(t.grid[i]) << ',' << format_double(t.labels[i]) << ',' << format_double(t.predictions[i])
            << '\n';
}

void write_density_svg(const std::filesystem::path& path, const DensityTable& t) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    constexpr double W = 480, H = 240, pad = 20;
    const double ymax = std::max({peak_height(t.labels), peak_height(t.predictions), 1e-12});
    auto line = [&](const std::vector<double>& y, const char* colour) {
        out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < t.grid.size(); ++i) {
            const double px = pad + (t.grid[i] + 1.2) / 2.4 * (W - 2 * pad);
            const double py = H - pad - y[i] / ymax * (H - 2 * pad);
            out << px << ',' << py << ' ';
        }
        out << "\"/>\n";
    };
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    out << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\"" << H - pad
        << "\" stroke=\"black\"/>\n";
    line(t.labels, "#1f77b4");
    line(t.predictions, "#d62728");
    out << "<text x=\"" << pad << "\" y=\"14\" font-size=\"11\" fill=\"#1f77b4\">labels</text>\n";
    out << "<text x=\"" << pad + 60 << "\" y=\"14\" font-size=\"11\" fill=\"#d62728\">predictions</text>\n";
    out << "</svg>\n";
}

double peak_height(const std::vector<double>& d) {
    return d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("trapezoid: length mismatch");
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    return s;
}

AgreementBin bin_of(double y) {
    if (!(y >= -1.0 && y <= 1.0)) throw std::invalid_argument("label " + format_double(y) + " outside [-1, 1]");
    if (y < 0.0) return AgreementBin::negative;
    if (y < 0.25) return AgreementBin::low;
    if (y < 0.5) return AgreementBin::mid;
    return AgreementBin::high;
}

std::string to_string(AgreementBin b) {
    switch (b) {
        case AgreementBin::negative: return "[-1,0)";
        case AgreementBin::low: return "[0,0.25)";
        case AgreementBin::mid: return "[0.25,0.5)";
        case AgreementBin::high: return "[0.5,1]";
    }
    return "?";
}

std::size_t CentroidReport::included() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return !e.omitted; }));
}

CentroidReport centroid_separation(const std::vector<Matrix>& features, const std::vector<double>& labels,
                                   const std::vector<std::string>& ids) {
    if (features.size() != labels.size() || labels.size() != ids.size())
        throw std::invalid_argument("centroid separation: features, labels and ids differ in length");
    const std::set<std::string> people(ids.begin(), ids.end());
    if (people.size() != 2)
        throw std::invalid_argument("centroid separation needs exactly 2 individuals, got " +
                                    std::to_string(people.size()));
    std::map<std::pair<std::string, int>, std::pair<Matrix, std::size_t>> sums;
    for (std::size_t i = 0; i < features.size(); ++i) {
        auto key = std::make_pair(ids[i], static_cast<int>(bin_of(labels[i])));
        auto& [sum, n] = sums[key];
        if (n == 0) sum = features[i];
        else {
            require_same_shape(sum, features[i], "centroid separation");
            sum += features[i];
        }
        ++n;
    }
    auto center = [&](const std::string& who, AgreementBin b) -> std::optional<Matrix> {
        auto it = sums.find({who, static_cast<int>(b)});
        if (it == sums.end()) return std::nullopt;
        Matrix c = it->second.first;
        c *= 1.0 / static_cast<double>(it->second.second);
        return c;
    };

    CentroidReport rep;
    const std::string a = *people.begin(), b = *std::next(people.begin());
    for (const auto& [self, other] : {std::pair{a, b}, std::pair{b, a}}) {
        for (AgreementBin bin : kAllBins) {
            CentroidEntry e;
            e.individual = self;
            e.bin = bin;
            auto c = center(self, bin);
            if (!c) {
                e.omitted = true;
                rep.entries.push_back(e);
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            for (AgreementBin ob : kAllBins) {
                if (ob == bin) continue;
                auto oc = center(other, ob);
                if (!oc) continue;
                const Matrix d = *c - *oc;
                double s = 0.0;
                for (double v : d.values()) s += v * v;
                if (std::sqrt(s) < best) {
                    best = std::sqrt(s);
                    e.nearest = ob;
                }
            }
            if (!e.nearest) e.omitted = true;
            else {
                e.min_distance = best;
                rep.total += best;
            }
            rep.entries.push_back(e);
        }
    }
    return rep;
}

FeatureTaps tap_features(CmisModel& model, const std::vector<Sample>& samples) {
    FeatureTaps taps;
    for (const Sample& s : samples) {
        Tape t(false);
        EmotionalTrace tr = model.emotional(t, s.motion.diffs, ForwardOptions{});
        const Var pre = tr.seq_emotional ? *tr.seq_emotional : *tr.frame_emotional;
        taps.pre.push_back(ag::mean_rows(pre).value());
        taps.post.push_back(ag::mean_rows(tr.features).value());
    }
    return taps;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const AblationSpec& spec, const Dataset& data,
                                std::uint64_t seed, std::unique_ptr<CmisModel>* model_out) {
    const auto start = std::chrono::steady_clock::now();
    spec.validate();
    const ModelConfig mc = cfg.resolved_model(data.width());
    const NeutralBank bank = build_neutral_bank(data, spec.neutral);
    auto model = std::make_unique<CmisModel>(mc, spec, seed);
    ExperimentConfig run_cfg = cfg;
    run_cfg.ablation = spec;
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    Trainer trainer(*model, data, bank, tc, run_cfg.effective_ida());
    trainer.run();
    ExperimentResult res;
    res.validation = evaluate_mse(*model, data.validation, cfg.eval.clamp);
    res.metrics = trainer.metrics();
    res.skipped = trainer.skipped_samples();
    res.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (model_out) *model_out = std::move(model);
    return res;
}

std::vector<AblationSpec> component_specs(const AblationSpec& base) {
    std::vector<AblationSpec> out;
    for (Pooling pool : {Pooling::global, Pooling::tap})
        for (int f = 0; f < 3; ++f)
            for (int s = 0; s < 3; ++s) {
                if (f == 0 && s == 0) continue;
                AblationSpec a = base;
                a.fle = f >= 1;
                a.flt = f == 2;
                a.sle = s >= 1;
                a.slt = s == 2;
                a.pooling = pool;
                out.push_back(a);
            }
    return out;
}

std::vector<AblationSpec> translator_variant_specs(const AblationSpec& base) {
    std::vector<AblationSpec> out;
    for (TranslatorKind k : {TranslatorKind::attention, TranslatorKind::ed_gru, TranslatorKind::ed_lstm}) {
        AblationSpec a = base;
        a.translator = k;
        out.push_back(a);
    }
    return out;
}

std::vector<AblationSpec> ida_placement_specs(const AblationSpec& base) {
    std::vector<AblationSpec> out;
    for (IdaPlacement p : {IdaPlacement::none, IdaPlacement::flee, IdaPlacement::slee, IdaPlacement::both}) {
        AblationSpec a = base;
        a.ida = p;
        out.push_back(a);
    }
    return out;
}

std::vector<AblationSpec> neutral_strategy_specs(const AblationSpec& base) {
    std::vector<AblationSpec> out;
    for (double edge : {0.0, 0.1, 0.25}) {
        AblationSpec a = base;
        a.neutral = {NeutralStrategy::peak, 0.25, edge};
        out.push_back(a);
    }
    AblationSpec a = base;
    a.neutral = {NeutralStrategy::non_backchannel, 0.25, 0.1};
    out.push_back(a);
    return out;
}

std::vector<AblationRow> run_ablation_matrix(const std::vector<AblationSpec>& specs, const ExperimentConfig& cfg,
                                             const Dataset& data, const std::vector<std::uint64_t>& seeds,
                                             std::size_t jobs) {
    for (const auto& s : specs) s.validate();
    std::vector<AblationRow> rows(specs.size() * seeds.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            try {
                const AblationSpec& spec = specs[i / seeds.size()];
                const std::uint64_t seed = seeds[i % seeds.size()];
                const ExperimentResult r = run_experiment(cfg, spec, data, seed);
                rows[i] = {spec, seed, r.validation.mse, r.wall_s};
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(jobs, rows.size()));
    if (n == 1) worker();
    else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kAblationHeader << '\n';
    for (const auto& r : rows)
        out << r.spec.components() << ',' << to_string(r.spec.pooling) << ',' << to_string(r.spec.ida) << ','
            << to_string(r.spec.translator) << ',' << to_string(r.spec.neutral.strategy) << ','
            << format_double(r.spec.neutral.center) << ',' << format_double(r.spec.neutral.edge) << ',' << r.seed
            << ',' << format_double(r.mse) << ',' << format_double(r.wall_s) << '\n';
}

std::string to_string(ModalityMode m) {
    switch (m) {
        case ModalityMode::all_to_all: return "all-to-all";
        case ModalityMode::all_to_visual: return "all-to-visual";
        case ModalityMode::visual_to_all: return "visual-to-all";
        case ModalityMode::visual_to_visual: return "visual-to-visual";
    }
    return "?";
}

ModalityMode parse_modality_mode(const std::string& s) {
    for (ModalityMode m : kAllModalityModes)
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown modality mode '" + s + "'");
}

Dataset filter_modality(const Dataset& data, ModalityMode mode) {
    auto visual_only = [](const std::vector<Sample>& in) {
        std::vector<Sample> out;
        std::copy_if(in.begin(), in.end(), std::back_inserter(out),
                     [](const Sample& s) { return s.modality == Modality::visual; });
        return out;
    };
    Dataset out;
    out.negatives = data.negatives;
    const bool visual_train = mode == ModalityMode::visual_to_all || mode == ModalityMode::visual_to_visual;
    const bool visual_eval = mode == ModalityMode::all_to_visual || mode == ModalityMode::visual_to_visual;
    out.train = visual_train ? visual_only(data.train) : data.train;
    out.validation = visual_eval ? visual_only(data.validation) : data.validation;
    if (out.train.empty()) throw std::invalid_argument(to_string(mode) + ": training split is empty after filtering");
    if (out.validation.empty())
        throw std::invalid_argument(to_string(mode) + ": evaluation split is empty after filtering");
    return out;
}

std::vector<ModalityRow> modality_experiment(const ExperimentConfig& cfg, const Dataset& data,
                                             const std::vector<ModalityMode>& modes,
                                             const std::vector<std::uint64_t>& seeds) {
    std::vector<Dataset> filtered;
    for (ModalityMode m : modes) filtered.push_back(filter_modality(data, m));
    std::vector<ModalityRow> rows;
    for (std::size_t i = 0; i < modes.size(); ++i)
        for (std::uint64_t seed : seeds) {
            const ExperimentResult r = run_experiment(cfg, cfg.ablation, filtered[i], seed);
            rows.push_back({modes[i], seed, r.validation.mse, filtered[i].train.size(), filtered[i].validation.size()});
        }
    return rows;
}

void write_modality_csv(const std::filesystem::path& path, const std::vector<ModalityRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kModalityHeader << '\n';
    for (const auto& r : rows)
        out << to_string(r.mode) << ',' << r.seed << ',' << format_double(r.mse) << ',' << r.train_samples << ','
            << r.eval_samples << '\n';
}

std::vector<ModalityStats> modality_statistics(const Dataset& data) {
    std::vector<ModalityStats> out;
    for (const auto& [name, split] : {std::pair{"train", &data.train}, std::pair{"validation", &data.validation}})
        for (Modality m : {Modality::visual, Modality::auditive, Modality::unknown}) {
            ModalityStats st{name, m};
            double sum = 0.0, sq = 0.0;
            for (const Sample& s : *split)
                if (s.modality == m) {
                    ++st.count;
                    sum += s.label;
                    sq += s.label * s.label;
                }
            if (st.count == 0) continue;
            const double n = static_cast<double>(st.count);
            st.mean_label = sum / n;
            st.label_std = std::sqrt(std::max(0.0, sq / n - st.mean_label * st.mean_label));
            out.push_back(st);
        }
    return out;
}

void write_modality_stats_csv(const std::filesystem::path& path, const std::vector<ModalityStats>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kModalityStatsHeader << '\n';
    for (const auto& r : rows)
        out << r.split << ',' << to_string(r.modality) << ',' << r.count << ',' << format_double(r.mean_label) << ','
            << format_double(r.label_std) << '\n';
}

}  // namespace cmis
