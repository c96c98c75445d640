#include "poisonlab/matrix_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace poisonlab {

std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view tok) {
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) tok.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw Error(ErrorCode::IoError, "cannot parse number '" + std::string(tok) + "'");
    }
    return v;
}

std::vector<std::vector<double>> parse_grid(std::string_view text) {
    std::vector<std::vector<double>> rows;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        std::vector<double> row;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            row.push_back(parse_double(line.substr(start, comma == std::string_view::npos ? line.size() - start
                                                                                         : comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::string to_csv(const Mat& m) {
    std::string out;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    return out;
}

Mat mat_from_csv(std::string_view text) {
    const auto rows = parse_grid(text);
    if (rows.empty()) throw Error(ErrorCode::IoError, "empty matrix CSV");
    const std::size_t cols = rows.front().size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw Error(ErrorCode::IoError, "ragged matrix CSV");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Mat(rows.size(), cols, std::move(data));
}

std::string to_csv(const Vect& v) {
    std::string out;
    for (double x : v) {
        out += format_double(x);
        out += '\n';
    }
    return out;
}

Vect vect_from_csv(std::string_view text) {
    const auto rows = parse_grid(text);
    std::vector<double> data;
    for (const auto& r : rows) {
        if (r.size() != 1) throw Error(ErrorCode::IoError, "vector CSV must have one value per line");
        data.push_back(r.front());
    }
    if (data.empty()) throw Error(ErrorCode::IoError, "empty vector CSV");
    return Vect(std::move(data));
}

nlohmann::json to_json(const Mat& m) {
    return {{"rows", m.rows()},
            {"cols", m.cols()},
            {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Mat mat_from_json(const nlohmann::json& j) {
    try {
        return Mat(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                   j.at("data").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("malformed matrix JSON: ") + e.what());
    }
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace poisonlab
