#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

namespace itrisk {

// Shortest-round-trip serialization of a double (17 significant digits).
std::string format_double(double value);

// Parse a double; throws IoError on malformed input.
double parse_double(const std::string& token, const std::string& context);

// Headerless numeric CSV, one matrix row per line.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

void write_vector_csv(const std::filesystem::path& path, const Eigen::VectorXd& v);
Eigen::VectorXd read_vector_csv(const std::filesystem::path& path);

// Row-oriented CSV with a header line; every cell is preformatted text.
class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    void write_row(const std::vector<std::string>& cells);
    ~CsvWriter();

    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

  private:
    struct Impl;
    Impl* impl_;
};

} // namespace itrisk
