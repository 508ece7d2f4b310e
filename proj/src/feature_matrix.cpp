#include "phenoclust/feature_matrix.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "phenoclust/error.hpp"
#include "phenoclust/text.hpp"

namespace phenoclust {

void FeatureMatrix::validate() const {
    if (ids.size() != rows()) throw Error(Errc::schema, "id count does not match row count");
    if (columns.size() != cols()) throw Error(Errc::schema, "column-name count does not match column count");
    std::set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second) throw Error(Errc::duplicate_id, "duplicate patient id '" + id + "'");
    seen.clear();
    for (const auto& c : columns)
        if (!seen.insert(c).second) throw Error(Errc::schema, "duplicate column '" + c + "'");
    if (!values.allFinite()) throw Error(Errc::malformed_input, "feature matrix holds non-finite values");
}

FeatureMatrix parse_feature_csv(std::string_view content, const std::string& source) {
    std::istringstream in{std::string(content)};
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::malformed_input, source + ": empty file");
    auto header = text::split(text::trim(line), ',');
    if (header.empty() || text::trim(header[0]) != "patient_id")
        throw Error(Errc::malformed_input, source + ": header must start with 'patient_id'");

    FeatureMatrix m;
    for (std::size_t c = 1; c < header.size(); ++c) m.columns.emplace_back(text::trim(header[c]));
    const std::size_t p = m.columns.size();

    std::vector<std::vector<double>> rows;
    std::set<std::string> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto cells = text::split(text::trim(line), ',');
        if (cells.size() != p + 1)
            throw Error(Errc::malformed_input, source + ":" + std::to_string(line_no) + ": expected " +
                                                   std::to_string(p + 1) + " cells, found " +
                                                   std::to_string(cells.size()));
        std::string id(text::trim(cells[0]));
        if (id.empty()) throw Error(Errc::malformed_input, source + ":" + std::to_string(line_no) + ": empty patient id");
        if (!seen.insert(id).second)
            throw Error(Errc::duplicate_id, source + ":" + std::to_string(line_no) + ": duplicate patient id '" + id + "'");
        std::vector<double> row(p);
        for (std::size_t c = 0; c < p; ++c)
            if (!text::parse_double(cells[c + 1], row[c]))
                throw Error(Errc::malformed_input, source + ":" + std::to_string(line_no) + ": column '" +
                                                       m.columns[c] + "' holds non-numeric value '" +
                                                       cells[c + 1] + "'");
        m.ids.push_back(std::move(id));
        rows.push_back(std::move(row));
    }
    m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < p; ++c) m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    m.validate();
    return m;
}

FeatureMatrix read_feature_csv(const std::filesystem::path& path) {
    return parse_feature_csv(text::read_file(path), path.string());
}

std::string format_feature_csv(const FeatureMatrix& m) {
    m.validate();
    std::string out = "patient_id";
    for (const auto& c : m.columns) out += "," + c;
    out += "\n";
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out += m.ids[r];
        for (std::size_t c = 0; c < m.cols(); ++c)
            out += "," + text::format_double(m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
        out += "\n";
    }
    return out;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& m) {
    text::write_file(path, format_feature_csv(m));
}

}  // namespace phenoclust
