#pragma once

// CSV output: '#' metadata lines, one column-name line, then data rows.
// Data rows depend only on the config and seed; the timestamp lives in the
// metadata so reruns differ only in '#' lines.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "genepide/config.hpp"

namespace genepide {

inline constexpr const char* kVersion = "1.0.0";

struct RunMetadata {
    std::string command;
    std::string config_name;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> extra;
};

inline RunMetadata metadata_for(const RunConfig& c, std::string command, std::uint64_t seed) {
    return {std::move(command), c.name, config_hash(c), seed, {}};
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const RunMetadata& meta, std::vector<std::string> columns)
        : out_(path), width_(columns.size()) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        out_ << "# genepide " << kVersion << "\n";
        out_ << "# command: " << meta.command << "\n";
        out_ << "# config: " << meta.config_name << "\n";
        out_ << "# config_hash: " << meta.config_hash << "\n";
        out_ << "# seed: " << meta.seed << "\n";
        out_ << "# created: " << utc_timestamp() << "\n";
        for (const auto& [k, v] : meta.extra) out_ << "# " << k << ": " << v << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << "\n";
    }

    void row(std::span<const double> values) {
        if (values.size() != width_) throw std::invalid_argument("CsvWriter: row width mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_number(values[i]);
        out_ << "\n";
    }
    void row(std::initializer_list<double> values) { row(std::span<const double>(values.begin(), values.size())); }

private:
    std::ofstream out_;
    std::size_t width_;
};

/// Plain text report with the same metadata block.
class ReportWriter {
public:
    ReportWriter(const std::filesystem::path& path, const RunMetadata& meta) : out_(path) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        out_ << "# genepide " << kVersion << "\n";
        out_ << "# command: " << meta.command << "\n";
        out_ << "# config: " << meta.config_name << "\n";
        out_ << "# config_hash: " << meta.config_hash << "\n";
        out_ << "# seed: " << meta.seed << "\n";
        out_ << "# created: " << utc_timestamp() << "\n";
    }

    void line(const std::string& key, const std::string& value) { out_ << key << ": " << value << "\n"; }
    void line(const std::string& key, double value) { line(key, format_number(value)); }
    void text(const std::string& s) { out_ << s << "\n"; }

private:
    std::ofstream out_;
};

}  // namespace genepide
