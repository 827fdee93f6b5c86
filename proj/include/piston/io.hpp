#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace piston {

/// Shortest exact decimal representation; round-trips to the same double.
inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Minimal CSV writer with deterministic number formatting.
class CsvWriter {
  public:
    explicit CsvWriter(const std::string& filename) : out_(filename) {
        if (!out_) throw std::runtime_error("cannot open output file '" + filename + "'");
    }

    void header(const std::vector<std::string>& cols) { row_strings(cols); }

    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    CsvWriter& cell(double x) {
        pending_.push_back(fmt_double(x));
        return *this;
    }
    CsvWriter& cell(long x) {
        pending_.push_back(std::to_string(x));
        return *this;
    }
    CsvWriter& cell(const std::string& s) {
        pending_.push_back(s);
        return *this;
    }
    void end_row() {
        row_strings(pending_);
        pending_.clear();
    }

  private:
    std::ofstream out_;
    std::vector<std::string> pending_;
};

inline void write_text_file(const std::string& filename, const std::string& content) {
    std::ofstream out(filename);
    if (!out) throw std::runtime_error("cannot open output file '" + filename + "'");
    out << content;
}

}  // namespace piston
