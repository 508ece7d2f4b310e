#include "phenoclust/quantile_map.hpp"

#include <algorithm>

#include "json.hpp"
#include "phenoclust/error.hpp"
#include "phenoclust/stats.hpp"
#include "phenoclust/text.hpp"

namespace phenoclust::normalization {

namespace {
constexpr std::array<double, 5> kCutFractions = {0.05, 0.25, 0.50, 0.75, 0.95};
constexpr const char* kFormat = "phenoclust-quantile-map";
constexpr int kVersion = 1;
}  // namespace

int ColumnQuantiles::code_index(double x) const {
    if (constant()) return 3;
    if (x >= max) return 6;
    for (int k = 0; k < 5; ++k)
        if (x <= cuts[static_cast<std::size_t>(k)]) return k;
    return 5;
}

QuantileMap fit_quantiles(const FeatureMatrix& raw) {
    raw.validate();
    if (raw.rows() < 2) throw Error(Errc::insufficient_data, "quantile fit needs at least 2 samples");
    QuantileMap map;
    map.n_samples = raw.rows();
    for (std::size_t c = 0; c < raw.cols(); ++c) {
        const auto col = raw.values.col(static_cast<Eigen::Index>(c));
        std::vector<double> sorted(col.begin(), col.end());
        std::sort(sorted.begin(), sorted.end());
        ColumnQuantiles q;
        q.name = raw.columns[c];
        q.min = sorted.front();
        q.max = sorted.back();
        for (std::size_t k = 0; k < kCutFractions.size(); ++k) q.cuts[k] = percentile_sorted(sorted, kCutFractions[k]);
        map.columns.push_back(std::move(q));
    }
    return map;
}

FeatureMatrix apply_quantile_map(const QuantileMap& map, const FeatureMatrix& raw) {
    raw.validate();
    if (raw.cols() != map.columns.size())
        throw Error(Errc::schema, "feature count " + std::to_string(raw.cols()) + " does not match quantile map (" +
                                      std::to_string(map.columns.size()) + ")");
    for (std::size_t c = 0; c < raw.cols(); ++c)
        if (raw.columns[c] != map.columns[c].name)
            throw Error(Errc::schema, "column " + std::to_string(c) + " is '" + raw.columns[c] +
                                          "' but the quantile map expects '" + map.columns[c].name + "'");
    FeatureMatrix out;
    out.ids = raw.ids;
    out.columns = raw.columns;
    out.values.resize(raw.values.rows(), raw.values.cols());
    for (Eigen::Index c = 0; c < raw.values.cols(); ++c) {
        const auto& q = map.columns[static_cast<std::size_t>(c)];
        for (Eigen::Index r = 0; r < raw.values.rows(); ++r)
            out.values(r, c) = kCodes[static_cast<std::size_t>(q.code_index(raw.values(r, c)))];
    }
    return out;
}

std::string QuantileMap::to_json() const {
    nlohmann::ordered_json doc;
    doc["format"] = kFormat;
    doc["version"] = kVersion;
    doc["n_samples"] = n_samples;
    doc["layout"] = {"min", "p05", "p25", "p50", "p75", "p95", "max"};
    auto& cols = doc["features"] = nlohmann::ordered_json::array();
    for (const auto& q : columns) {
        cols.push_back({{"name", q.name},
                        {"values", {q.min, q.cuts[0], q.cuts[1], q.cuts[2], q.cuts[3], q.cuts[4], q.max}}});
    }
    return doc.dump(2) + "\n";
}

QuantileMap QuantileMap::from_json(const std::string& text_doc) {
    try {
        const auto doc = nlohmann::json::parse(text_doc);
        if (doc.at("format") != kFormat) throw Error(Errc::malformed_input, "not a quantile map document");
        if (doc.at("version") != kVersion)
            throw Error(Errc::malformed_input, "unsupported quantile map version " + doc.at("version").dump());
        QuantileMap map;
        map.n_samples = doc.at("n_samples").get<std::size_t>();
        for (const auto& f : doc.at("features")) {
            const auto v = f.at("values").get<std::vector<double>>();
            if (v.size() != 7) throw Error(Errc::malformed_input, "quantile entry must hold 7 numbers");
            if (!std::is_sorted(v.begin(), v.end()))
                throw Error(Errc::malformed_input, "quantile thresholds must be non-decreasing");
            ColumnQuantiles q;
            q.name = f.at("name").get<std::string>();
            q.min = v[0];
            std::copy(v.begin() + 1, v.begin() + 6, q.cuts.begin());
            q.max = v[6];
            map.columns.push_back(std::move(q));
        }
        return map;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::malformed_input, std::string("quantile map: ") + e.what());
    }
}

void QuantileMap::save(const std::filesystem::path& path) const { text::write_file(path, to_json()); }

QuantileMap QuantileMap::load(const std::filesystem::path& path) { return from_json(text::read_file(path)); }

}  // namespace phenoclust::normalization
