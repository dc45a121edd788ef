#include "cmis/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "cmis/rng.hpp"

namespace cmis {

namespace fs = std::filesystem;

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::negative: return "negative";
    }
    return "?";
}

std::string to_string(Modality m) {
    switch (m) {
        case Modality::visual: return "visual";
        case Modality::auditive: return "auditive";
        case Modality::unknown: return "unknown";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation" || s == "val") return Split::validation;
    if (s == "negative") return Split::negative;
    throw DataError("unknown split '" + s + "'");
}

Modality parse_modality(const std::string& s) {
    if (s == "visual") return Modality::visual;
    if (s == "auditive") return Modality::auditive;
    if (s == "unknown" || s.empty()) return Modality::unknown;
    throw DataError("unknown modality '" + s + "'");
}

std::string to_string(NeutralStrategy s) { return s == NeutralStrategy::peak ? "peak" : "non_backchannel"; }

NeutralStrategy parse_neutral_strategy(const std::string& s) {
    if (s == "peak") return NeutralStrategy::peak;
    if (s == "non_backchannel" || s == "non-backchannel") return NeutralStrategy::non_backchannel;
    throw std::invalid_argument("unknown neutral strategy '" + s + "'");
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

}  // namespace

Matrix read_numeric_csv(const fs::path& path, const std::string& context) {
    std::ifstream in(path);
    if (!in) throw DataError(context + ": cannot open '" + path.string() + "'");
    std::vector<double> values;
    std::size_t width = 0, rows = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (rows == 0) {
            width = cells.size();
        } else if (cells.size() != width) {
            throw DataError(context + ": row " + std::to_string(line_no) + " of '" + path.string() + "' has " +
                            std::to_string(cells.size()) + " columns, expected " + std::to_string(width));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = 0.0;
            if (!parse_double(cells[c], v) || !std::isfinite(v)) {
                throw DataError(context + ": non-numeric cell '" + cells[c] + "' at row " + std::to_string(line_no) +
                                ", column " + std::to_string(c + 1) + " of '" + path.string() + "'");
            }
            values.push_back(v);
        }
        ++rows;
    }
    return Matrix(rows, width, std::move(values));
}

std::vector<double> read_scores(const fs::path& path, const std::string& context) {
    Matrix m = read_numeric_csv(path, context);
    if (m.rows() > 0 && m.cols() != 1) throw DataError(context + ": score file '" + path.string() + "' must have one column");
    return {m.values().begin(), m.values().end()};
}

std::vector<ManifestRecord> load_landmark_dataset(const fs::path& manifest, int fps) {
    if (fps <= 0) throw DataError("fps must be positive");
    std::ifstream in(manifest);
    if (!in) throw DataError("cannot open manifest '" + manifest.string() + "'");
    const fs::path base = manifest.parent_path();

    std::string line;
    if (!std::getline(in, line)) return {};
    const auto header = split_csv_line(line);
    auto col = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    };
    const auto c_sample = col("sample_id"), c_ind = col("individual_id"), c_label = col("label"),
               c_split = col("split"), c_path = col("landmark_path"), c_score = col("score_path");
    if (!c_sample || !c_ind || !c_label || !c_split || !c_path) {
        throw DataError("manifest '" + manifest.string() +
                        "' must have header sample_id,individual_id,label,split,landmark_path[,score_path]");
    }

    struct Row {
        std::string sample_id, individual_id;
        double label;
        Split split;
        fs::path landmark_path;
        std::optional<fs::path> score_path;
    };
    std::vector<Row> rows;
    std::set<std::string> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        auto cell = [&](std::optional<std::size_t> c) { return *c < cells.size() ? cells[*c] : std::string(); };
        Row r;
        r.sample_id = cell(c_sample);
        if (r.sample_id.empty()) throw DataError("manifest line " + std::to_string(line_no) + ": empty sample_id");
        if (!seen.insert(r.sample_id).second) throw DataError("sample '" + r.sample_id + "': duplicate sample_id");
        r.individual_id = cell(c_ind);
        if (!parse_double(cell(c_label), r.label) || r.label < -1.0 || r.label > 1.0)
            throw DataError("sample '" + r.sample_id + "': label '" + cell(c_label) + "' is not a number in [-1, 1]");
        try {
            r.split = parse_split(cell(c_split));
        } catch (const DataError& e) {
            throw DataError("sample '" + r.sample_id + "': " + e.what());
        }
        fs::path p = cell(c_path);
        r.landmark_path = p.is_absolute() ? p : base / p;
        if (c_score) {
            const std::string s = cell(c_score);
            if (!s.empty()) {
                fs::path sp = s;
                r.score_path = sp.is_absolute() ? sp : base / sp;
            }
        }
        rows.push_back(std::move(r));
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.sample_id < b.sample_id; });

    // Files load in parallel; errors are kept per row and the first one in
    // sample order is reported so failures are deterministic too.
    std::vector<ManifestRecord> out(rows.size());
    std::vector<std::string> errors(rows.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows.size()); ++i) {
        const Row& r = rows[i];
        try {
            ManifestRecord rec;
            rec.sequence.frames = read_numeric_csv(r.landmark_path, "sample '" + r.sample_id + "'");
            rec.sequence.fps = fps;
            rec.sequence.individual_id = r.individual_id;
            rec.sequence.sample_id = r.sample_id;
            rec.label = r.label;
            rec.split = r.split;
            rec.score_path = r.score_path;
            out[i] = std::move(rec);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw DataError(e);

    std::size_t width = 0;
    for (const auto& rec : out) {
        const Matrix& f = rec.sequence.frames;
        if (f.rows() < 2) throw DataError("sample '" + rec.sequence.sample_id + "': needs at least 2 frames");
        if (width == 0) width = f.cols();
        if (f.cols() != width) {
            throw DataError("sample '" + rec.sequence.sample_id + "': landmark width " + std::to_string(f.cols()) +
                            " differs from dataset width " + std::to_string(width));
        }
    }
    return out;
}

std::size_t window_frames(double window_secs, int fps) {
    if (!(window_secs > 0.0)) throw std::invalid_argument("window_secs must be positive");
    // tolerate representation error in products such as 0.1 * 30
    return static_cast<std::size_t>(std::ceil(window_secs * fps - 1e-9));
}

MotionSequence window_and_diff(const LandmarkSequence& seq, double window_secs, WindowOrder order) {
    const std::size_t k = window_frames(window_secs, seq.fps);
    const std::size_t needed = order == WindowOrder::crop_then_diff ? k : k + 1;
    const std::size_t m = seq.frames.rows();
    if (m < needed || k < 2) {
        throw DataError("sample '" + seq.sample_id + "': window needs " + std::to_string(std::max<std::size_t>(needed, 2)) +
                        " frames, only " + std::to_string(m) + " available");
    }
    const std::size_t first = m - needed;
    const std::size_t t_out = needed - 1;
    const std::size_t h = seq.frames.cols();
    MotionSequence out;
    out.diffs = Matrix(t_out, h);
    out.fps = seq.fps;
    out.individual_id = seq.individual_id;
    out.sample_id = seq.sample_id;
    for (std::size_t t = 0; t < t_out; ++t)
        for (std::size_t c = 0; c < h; ++c) out.diffs(t, c) = seq.frames(first + t + 1, c) - seq.frames(first + t, c);
    return out;
}

bool NeutralBank::covers(const std::string& individual_id) const {
    auto it = pools.find(individual_id);
    return it != pools.end() && !it->second.empty();
}

std::size_t NeutralBank::total() const {
    std::size_t n = 0;
    for (const auto& [_, p] : pools) n += p.size();
    return n;
}

NeutralBank select_neutral_peak(std::span<const Sample> dataset, double center, double edge) {
    if (edge < 0.0) throw std::invalid_argument("select_neutral_peak: edge must be >= 0");
    NeutralBank bank;
    bank.strategy = NeutralStrategy::peak;
    bank.center = center;
    bank.edge = edge;
    for (const Sample& s : dataset) {
        if (s.split != Split::train) continue;
        if (std::abs(s.label - center) <= edge) bank.pools[s.individual_id()].push_back(s);
    }
    return bank;
}

NeutralBank select_neutral_nonbackchannel(std::span<const Sample> /*dataset*/, std::span<const Sample> negatives) {
    NeutralBank bank;
    bank.strategy = NeutralStrategy::non_backchannel;
    for (const Sample& s : negatives) bank.pools[s.individual_id()].push_back(s);
    return bank;
}

std::vector<Sample> draw_neutrals(const NeutralBank& bank, const std::string& individual_id, std::size_t n,
                                  std::uint64_t seed) {
    auto it = bank.pools.find(individual_id);
    if (it == bank.pools.end() || it->second.empty())
        throw DataError("individual '" + individual_id + "' has no neutral samples");
    const auto& pool = it->second;
    Rng rng(seed);
    std::vector<Sample> out;
    out.reserve(n);
    if (pool.size() >= n) {
        std::vector<std::size_t> idx(pool.size());
        std::iota(idx.begin(), idx.end(), 0);
        // partial Fisher–Yates
        for (std::size_t i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
            std::swap(idx[i], idx[pick(rng)]);
            out.push_back(pool[idx[i]]);
        }
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t i = 0; i < n; ++i) out.push_back(pool[pick(rng)]);
    }
    return out;
}

Modality classify_modality(std::span<const double> frame_scores, const ModalityRule& rule) {
    const std::size_t window = window_frames(rule.window_secs, rule.fps);
    const std::size_t begin = frame_scores.size() > window ? frame_scores.size() - window : 0;
    std::size_t run = 0;
    for (std::size_t i = begin; i < frame_scores.size(); ++i) {
        run = frame_scores[i] > rule.threshold ? run + 1 : 0;
        if (rule.run_len > 0 && run >= rule.run_len) return Modality::auditive;
    }
    return Modality::visual;
}

std::size_t Dataset::width() const {
    for (const auto* v : {&train, &validation, &negatives})
        if (!v->empty()) return v->front().motion.width();
    return 0;
}

std::size_t Dataset::frames() const {
    for (const auto* v : {&train, &validation, &negatives})
        if (!v->empty()) return v->front().motion.frames();
    return 0;
}

Dataset build_dataset(const std::vector<ManifestRecord>& records, const DatasetOptions& opts) {
    Dataset ds;
    for (const auto& rec : records) {
        Sample s;
        s.motion = window_and_diff(rec.sequence, opts.window_secs, opts.order);
        s.label = rec.label;
        s.split = rec.split;
        if (opts.classify && rec.score_path) {
            const auto scores = read_scores(*rec.score_path, "sample '" + rec.sequence.sample_id + "'");
            s.modality = classify_modality(scores, opts.rule);
        }
        switch (rec.split) {
            case Split::train: ds.train.push_back(std::move(s)); break;
            case Split::validation: ds.validation.push_back(std::move(s)); break;
            case Split::negative: ds.negatives.push_back(std::move(s)); break;
        }
    }
    return ds;
}

}  // namespace cmis
