// Plumbing shared by the command-line tool and its tests: run configuration,
// option-string parsers, and report serialization (CSV + JSON).
#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ovainn/ovainn.hpp"

namespace ovacli {

using nlohmann::json;

// Every knob of one CLI run. Subcommands validate the subset they use.
struct RunConfig {
    // Primary dataset (training data for train/baseline, test data for
    // eval/predict). Exactly one of {mnist pair, features} may be given.
    std::string mnist_images;
    std::string mnist_labels;
    std::string features;

    // Held-out test set for train --eval-every-class and for baseline.
    std::string test_images;
    std::string test_labels;
    std::string test_features;

    std::string normalize;         // empty = scale_255 for IDX, none for features
    std::string class_order = "all";
    std::uint64_t limit_per_class = 0;  // 0 = every sample

    ovainn::TrainConfig train;
    std::string activation = "relu";

    std::string model;
    std::string report;
    std::string mode = "single";   // single | multi
    std::string tasks;             // e.g. "0-4;5-9"
    unsigned threads = 0;          // 0 = hardware concurrency
    int parallel_classes = 1;      // >1 trains that many classes concurrently
    int eval_every_class = -1;     // -1 = auto (on iff test data given)
    std::string config_file;       // flat key=value file; flags win over it

    // inspect without a model file: derive parameter counts from shape flags.
    std::uint64_t dim = 784;
    std::uint64_t classes = 10;
};

// I/O failures while writing artifacts; read-side failures stay IoError so
// the exit-code mapping can tell input problems (2) from output ones (3).
struct OutputIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename Fn>
void write_phase(Fn&& fn) {
    try {
        fn();
    } catch (const ovainn::IoError& e) {
        throw OutputIoError(e.what());
    }
}

// ---------------------------------------------------------------------------
// Option-string parsers
// ---------------------------------------------------------------------------

// "0,1,2" or "0-4" or any comma-separated mix of ids and inclusive ranges.
inline std::vector<std::int32_t> parse_id_list(const std::string& spec) {
    std::vector<std::int32_t> ids;
    std::size_t start = 0;
    while (start <= spec.size()) {
        const std::size_t comma = spec.find(',', start);
        const std::string token =
            spec.substr(start, (comma == std::string::npos ? spec.size() : comma) - start);
        start = (comma == std::string::npos) ? spec.size() + 1 : comma + 1;
        if (token.empty()) {
            throw ovainn::ConfigError("class list: empty entry in \"" + spec + "\"");
        }
        const auto parse_int = [&](const std::string& s) {
            std::size_t used = 0;
            long v = 0;
            try {
                v = std::stol(s, &used);
            } catch (const std::exception&) {
                throw ovainn::ConfigError("class list: cannot parse \"" + s + "\"");
            }
            if (used != s.size() || v < 0 || v > 0x7FFFFFFFL) {
                throw ovainn::ConfigError("class list: \"" + s +
                                          "\" is not a non-negative class id");
            }
            return static_cast<std::int32_t>(v);
        };
        const std::size_t dash = token.find('-', 1);  // index 0 would be a sign
        if (dash != std::string::npos) {
            const std::int32_t lo = parse_int(token.substr(0, dash));
            const std::int32_t hi = parse_int(token.substr(dash + 1));
            if (hi < lo) {
                throw ovainn::ConfigError("class list: descending range \"" + token + "\"");
            }
            for (std::int32_t c = lo; c <= hi; ++c) ids.push_back(c);
        } else {
            ids.push_back(parse_int(token));
        }
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            if (ids[i] == ids[j]) {
                throw ovainn::ConfigError("class list: duplicate id " + std::to_string(ids[i]));
            }
        }
    }
    return ids;
}

// Flat key=value config text: one assignment per line, '#' or ';' comments,
// blank lines skipped, later assignments to the same key replace earlier ones.
// Returns keys in first-appearance order so injection stays deterministic.
inline std::vector<std::pair<std::string, std::string>> parse_flat_config(
    const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    const auto trim = [](const std::string& s) {
        const char* ws = " \t\r";
        const std::size_t b = s.find_first_not_of(ws);
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(ws) - b + 1);
    };
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        const std::string raw =
            text.substr(start, (nl == std::string::npos ? text.size() : nl) - start);
        start = (nl == std::string::npos) ? text.size() + 1 : nl + 1;
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ovainn::ConfigError("config line " + std::to_string(line_no) +
                                      ": expected key=value, got \"" + line + "\"");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ovainn::ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        bool replaced = false;
        for (auto& [k, v] : entries) {
            if (k == key) {
                v = value;
                replaced = true;
                break;
            }
        }
        if (!replaced) entries.emplace_back(key, value);
    }
    return entries;
}

// Semicolon-separated tasks, each a class list: "0-4;5-9".
inline ovainn::TaskPartition parse_tasks(const std::string& spec) {
    ovainn::TaskPartition tasks;
    std::size_t start = 0;
    while (start <= spec.size()) {
        const std::size_t semi = spec.find(';', start);
        const std::string token =
            spec.substr(start, (semi == std::string::npos ? spec.size() : semi) - start);
        start = (semi == std::string::npos) ? spec.size() + 1 : semi + 1;
        if (token.empty()) throw ovainn::ConfigError("tasks: empty task in \"" + spec + "\"");
        tasks.push_back(parse_id_list(token));
    }
    return tasks;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

// Shortest text that round-trips a double (17 significant digits).
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string curve_csv(const std::vector<std::pair<std::size_t, double>>& curve) {
    std::string out = "classes_seen,accuracy\n";
    for (const auto& [seen, acc] : curve) {
        out += std::to_string(seen) + "," + fmt_double(acc) + "\n";
    }
    return out;
}

inline json report_json(const ovainn::EvalReport& report,
                        const std::vector<std::pair<std::string, std::string>>& tags = {}) {
    json j;
    j["mode"] = ovainn::to_string(report.mode);
    j["class_ids"] = report.class_ids;
    j["confusion_matrix"] = report.confusion;
    j["correct"] = report.correct;
    j["total"] = report.total;
    j["accuracy"] = report.accuracy();
    json curve = json::array();
    for (const auto& [seen, acc] : report.accuracy_after_each_batch) {
        curve.push_back({{"classes_seen", seen}, {"accuracy", acc}});
    }
    j["accuracy_after_each_batch"] = std::move(curve);
    for (const auto& [key, value] : tags) j[key] = value;
    return j;
}

// --report PATH writes PATH-derived .csv and .json siblings; a trailing
// .csv/.json on PATH is treated as the base name's extension.
inline std::string report_base(const std::string& path) {
    for (const char* ext : {".csv", ".json"}) {
        const std::size_t n = std::string(ext).size();
        if (path.size() > n && path.compare(path.size() - n, n, ext) == 0) {
            return path.substr(0, path.size() - n);
        }
    }
    return path;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw ovainn::IoError("cannot open " + path + " for writing");
    const std::size_t written = text.empty() ? 0 : std::fwrite(text.data(), 1, text.size(), f);
    const int rc = std::fclose(f);
    if (written != text.size() || rc != 0) throw ovainn::IoError("cannot write " + path);
}

inline void write_report_files(const std::string& report_path, const ovainn::EvalReport& report,
                               const std::vector<std::pair<std::string, std::string>>& tags = {}) {
    const std::string base = report_base(report_path);
    write_phase([&] {
        write_text_file(base + ".csv", curve_csv(report.accuracy_after_each_batch));
        write_text_file(base + ".json", report_json(report, tags).dump(2) + "\n");
    });
}

// Parameters of one expert with the given shape: per block two sub-networks,
// each rank*(half) + rank + half*rank + half values.
inline std::uint64_t params_for_shape(std::uint64_t dim, std::uint64_t rank,
                                      std::uint64_t blocks) {
    if (dim == 0 || dim % 2 != 0) {
        throw ovainn::ConfigError("params_for_shape: dim must be positive and even");
    }
    const std::uint64_t half = dim / 2;
    return blocks * 2 * (2 * rank * half + rank + half);
}

}  // namespace ovacli
