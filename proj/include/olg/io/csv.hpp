#pragma once
// CSV output: header row, comma separated, LF line endings, numbers with 17
// significant digits so that values round-trip exactly.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace olg::io {

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";  // no negative zero
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : out_(path, std::ios::binary | std::ios::trunc), columns_(header.size()) {
        if (!out_) throw std::runtime_error("csv: cannot open '" + path + "' for writing");
        write_fields(header);
    }

    void row(const std::vector<double>& values) {
        std::vector<std::string> f;
        f.reserve(values.size());
        for (double v : values) f.push_back(format_number(v));
        write_fields(f);
    }

    void row_text(const std::vector<std::string>& fields) { write_fields(fields); }

    void close() {
        out_.flush();
        if (!out_) throw std::runtime_error("csv: write failed");
        out_.close();
    }

private:
    void write_fields(const std::vector<std::string>& fields) {
        if (fields.size() != columns_) throw std::logic_error("csv: row width differs from the header");
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

    std::ofstream out_;
    std::size_t columns_;
};

}  // namespace olg::io
