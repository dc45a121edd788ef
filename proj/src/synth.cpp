#include "cmis/synth.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cmis/rng.hpp"

namespace cmis {

namespace fs = std::filesystem;

LabelDistribution parse_label_distribution(const std::string& s) {
    if (s == "peaked") return LabelDistribution::peaked;
    if (s == "uniform") return LabelDistribution::uniform;
    throw std::invalid_argument("unknown label distribution '" + s + "'");
}

std::string to_string(LabelDistribution d) { return d == LabelDistribution::peaked ? "peaked" : "uniform"; }

void validate(const SynthConfig& c) {
    if (c.n_individuals < 1 || c.samples_per_individual < 1) throw std::invalid_argument("synth: counts must be >= 1");
    if (c.baseline_scale < 0 || c.signal_scale < 0 || c.noise_scale < 0 || c.auditive_noise_scale < 0)
        throw std::invalid_argument("synth: scales must be >= 0");
    if (c.width < 1 || c.fps < 1 || !(c.window_secs > 0) || c.lead_secs < 0)
        throw std::invalid_argument("synth: width, fps and window must be positive");
    if (c.baseline_overlap < 0 || c.baseline_overlap > 1)
        throw std::invalid_argument("synth: baseline_overlap must be in [0, 1]");
    if (c.bump_width_secs <= 0 || c.bump_center_secs < 0)
        throw std::invalid_argument("synth: bump width must be positive and its center non-negative");
    if (c.validation_fraction < 0 || c.validation_fraction >= 1)
        throw std::invalid_argument("synth: validation_fraction must be in [0, 1)");
    if (c.auditive_fraction < 0 || c.auditive_fraction > 1)
        throw std::invalid_argument("synth: auditive_fraction must be in [0, 1]");
    if (window_frames(c.window_secs, c.fps) < 2) throw std::invalid_argument("synth: window covers fewer than 2 frames");
}

std::string format_double(double v) {
    // Shortest text that parses back to the same double.
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

namespace {

Matrix random_unit_row(std::size_t width, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix v(1, width);
    double norm = 0.0;
    for (double& x : v.values()) {
        x = n(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v.values()) x /= norm;
    return v;
}

double draw_label(LabelDistribution d, bool auditive, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    if (d == LabelDistribution::uniform) return u(rng);
    // Polite agreement dominates; auditive backchannels skew stronger.
    const double y = auditive ? 0.45 + 0.25 * n(rng) : 0.25 + 0.15 * n(rng);
    return std::clamp(y, -1.0, 1.0);
}

struct Clip {
    Matrix motion;  // lead + window rows
    std::vector<double> scores;
};

Clip make_clip(const SynthConfig& c, const Matrix& baseline, const Matrix& pattern, double amplitude, double noise,
               bool auditive, Rng& rng) {
    const std::size_t window_diffs = window_frames(c.window_secs, c.fps) - 1;
    const std::size_t lead = static_cast<std::size_t>(std::llround(c.lead_secs * c.fps));
    const std::size_t total = lead + window_diffs;
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> jitter(-0.15, 0.15);

    const double fps = static_cast<double>(c.fps);
    const double center = static_cast<double>(total) - c.bump_center_secs * fps + jitter(rng) * fps;
    const double width = std::max(1.0, c.bump_width_secs * fps);

    Clip clip;
    clip.motion = Matrix(total, c.width);
    for (std::size_t t = 0; t < total; ++t) {
        const double d = (static_cast<double>(t) - center) / width;
        const double bump = t >= lead ? amplitude * std::exp(-0.5 * d * d) : 0.0;
        for (std::size_t h = 0; h < c.width; ++h)
            clip.motion(t, h) = baseline(0, h) + bump * pattern(0, h) + noise * n(rng);
    }

    // 25 fps speech scores: silence is negative, speech positive.
    const std::size_t score_window = window_frames(c.window_secs, 25);
    const std::size_t n_scores = score_window + static_cast<std::size_t>(std::llround(c.lead_secs * 25));
    clip.scores.resize(n_scores);
    for (double& s : clip.scores) s = std::min(0.1, -0.6 + 0.15 * n(rng));
    if (auditive) {
        std::uniform_int_distribution<std::size_t> start(n_scores - score_window, n_scores - 10);
        const std::size_t s0 = start(rng);
        for (std::size_t i = s0; i < s0 + 10; ++i) clip.scores[i] = 0.5 + 0.1 * std::abs(n(rng));
    }
    return clip;
}

Sample to_sample(const Matrix& motion, std::size_t window_diffs, const std::string& ind, const std::string& id, int fps,
                 double label, Split split, Modality modality) {
    Sample s;
    s.motion.diffs = Matrix(window_diffs, motion.cols());
    const std::size_t first = motion.rows() - window_diffs;
    std::copy(motion.data() + first * motion.cols(), motion.data() + motion.size(), s.motion.diffs.data());
    s.motion.fps = fps;
    s.motion.individual_id = ind;
    s.motion.sample_id = id;
    s.label = label;
    s.split = split;
    s.modality = modality;
    return s;
}

LandmarkSequence integrate(const Matrix& motion, int fps, const std::string& ind, const std::string& id) {
    LandmarkSequence seq;
    seq.frames = Matrix(motion.rows() + 1, motion.cols(), 0.5);
    for (std::size_t t = 0; t < motion.rows(); ++t)
        for (std::size_t h = 0; h < motion.cols(); ++h) seq.frames(t + 1, h) = seq.frames(t, h) + motion(t, h);
    seq.fps = fps;
    seq.individual_id = ind;
    seq.sample_id = id;
    return seq;
}

std::string pad(std::size_t v, int width) {
    std::string s = std::to_string(v);
    return std::string(std::max(0, width - static_cast<int>(s.size())), '0') + s;
}

}  // namespace

SynthDataset generate_synthetic(const SynthConfig& c) {
    validate(c);
    SynthDataset out;
    const std::size_t window_diffs = window_frames(c.window_secs, c.fps) - 1;
    Rng pattern_rng = make_rng(c.seed, {0x5157});
    out.signal_pattern = random_unit_row(c.width, pattern_rng);

    const std::size_t n_val =
        static_cast<std::size_t>(std::llround(c.validation_fraction * static_cast<double>(c.samples_per_individual)));
    for (std::size_t i = 0; i < c.n_individuals; ++i) {
        const std::string ind = "p" + pad(i, 3);
        Rng rng = make_rng(c.seed, {0xB45E, i});
        Matrix b = random_unit_row(c.width, rng);
        if (c.baseline_overlap > 0.0) {
            // Replace the pattern component by a N(0, ρ²) draw; the norm stays ≈ 1.
            std::normal_distribution<double> z(0.0, 1.0);
            double dot = 0.0;
            for (std::size_t h = 0; h < c.width; ++h) dot += b(0, h) * out.signal_pattern(0, h);
            Matrix ortho = b - out.signal_pattern * dot;
            double norm = 0.0;
            for (double v : ortho.values()) norm += v * v;
            ortho *= std::sqrt(1.0 - c.baseline_overlap * c.baseline_overlap) / std::sqrt(std::max(norm, 1e-300));
            b = ortho + out.signal_pattern * (c.baseline_overlap * z(rng));
        }
        b *= c.baseline_scale;
        out.baselines[ind] = b;

        for (std::size_t k = 0; k < c.samples_per_individual + c.negatives_per_individual; ++k) {
            const bool negative = k >= c.samples_per_individual;
            const std::string id = ind + (negative ? "_n" : "_s") + pad(negative ? k - c.samples_per_individual : k, 3);
            Rng srng = make_rng(c.seed, {0x5A4E, i, k});
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const bool auditive = !negative && u(srng) < c.auditive_fraction;
            const double label = negative ? 0.0 : draw_label(c.label_distribution, auditive, srng);
            const double amplitude = negative ? 0.0 : c.signal_scale * label;
            const double noise = c.noise_scale + (auditive ? c.auditive_noise_scale : 0.0);
            Clip clip = make_clip(c, b, out.signal_pattern, amplitude, noise, auditive, srng);

            Split split = Split::train;
            if (negative) split = Split::negative;
            else if (k < n_val) split = Split::validation;
            const Modality modality = negative ? Modality::unknown : (auditive ? Modality::auditive : Modality::visual);
            Sample s = to_sample(clip.motion, window_diffs, ind, id, c.fps, label, split, modality);
            out.landmarks[id] = integrate(clip.motion, c.fps, ind, id);
            out.scores[id] = std::move(clip.scores);
            switch (split) {
                case Split::train: out.data.train.push_back(std::move(s)); break;
                case Split::validation: out.data.validation.push_back(std::move(s)); break;
                case Split::negative: out.data.negatives.push_back(std::move(s)); break;
            }
        }
    }
    return out;
}

void export_synthetic(const SynthDataset& ds, const fs::path& dir) {
    fs::create_directories(dir / "landmarks");
    fs::create_directories(dir / "scores");
    std::ofstream manifest(dir / "manifest.csv");
    if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.csv").string());
    manifest << "sample_id,individual_id,label,split,landmark_path,score_path\n";
    auto emit = [&](const Sample& s) {
        const auto& id = s.sample_id();
        const fs::path lm = fs::path("landmarks") / (id + ".csv");
        const fs::path sc = fs::path("scores") / (id + ".csv");
        std::ofstream f(dir / lm);
        const Matrix& frames = ds.landmarks.at(id).frames;
        for (std::size_t t = 0; t < frames.rows(); ++t) {
            for (std::size_t h = 0; h < frames.cols(); ++h) f << (h ? "," : "") << format_double(frames(t, h));
            f << '\n';
        }
        std::ofstream g(dir / sc);
        for (double v : ds.scores.at(id)) g << format_double(v) << '\n';
        manifest << id << ',' << s.individual_id() << ',' << format_double(s.label) << ',' << to_string(s.split) << ','
                 << lm.generic_string() << ',' << sc.generic_string() << '\n';
    };
    for (const auto* v : {&ds.data.train, &ds.data.validation, &ds.data.negatives})
        for (const Sample& s : *v) emit(s);

    std::ofstream b(dir / "baselines.csv");
    b << "individual_id";
    const std::size_t w = ds.baselines.empty() ? 0 : ds.baselines.begin()->second.cols();
    for (std::size_t h = 0; h < w; ++h) b << ",b" << h;
    b << '\n';
    for (const auto& [ind, v] : ds.baselines) {
        b << ind;
        for (double x : v.values()) b << ',' << format_double(x);
        b << '\n';
    }
}

}  // namespace cmis
