#include "emx/io.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "emx/errors.hpp"

namespace emx {

static_assert(sizeof(double) == 8, "EMX1 requires 64-bit doubles");

namespace {
constexpr char kMagic[4] = {'E', 'M', 'X', '1'};
}

void write_emx(const std::string& path, const Matrix& A) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kMagic, 4);
    const std::uint64_t rows = static_cast<std::uint64_t>(A.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(A.cols());
    out.write(reinterpret_cast<const char*>(&rows), 8);
    out.write(reinterpret_cast<const char*>(&cols), 8);
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor R = A;
    out.write(reinterpret_cast<const char*>(R.data()), static_cast<std::streamsize>(8 * rows * cols));
    if (!out) throw IoError("write failed: " + path);
}

Matrix read_emx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("not an EMX1 file: " + path);
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 8);
    in.read(reinterpret_cast<char*>(&cols), 8);
    if (!in) throw IoError("truncated EMX1 header: " + path);
    if (rows > (1ull << 32) || cols > (1ull << 32) || rows * cols > (1ull << 34))
        throw IoError("EMX1 dimensions out of range: " + path);
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor R(static_cast<Index>(rows), static_cast<Index>(cols));
    in.read(reinterpret_cast<char*>(R.data()), static_cast<std::streamsize>(8 * rows * cols));
    if (!in) throw IoError("truncated EMX1 payload: " + path);
    return Matrix(R);
}

std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv_matrix(const std::string& path, const Matrix& A) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (Index i = 0; i < A.rows(); ++i) {
        for (Index j = 0; j < A.cols(); ++j) {
            if (j) out << ',';
            out << format_g17(A(i, j));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

Matrix read_csv_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                size_t used = 0;
                row.push_back(std::stod(cell, &used));
                while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw IoError("CSV parse error in " + path + ": \"" + cell + "\"");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw IoError("CSV is not rectangular: " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) return Matrix(0, 0);
    Matrix A(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < A.rows(); ++i)
        for (Index j = 0; j < A.cols(); ++j) A(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    return A;
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("JSON parse error in " + path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace emx
