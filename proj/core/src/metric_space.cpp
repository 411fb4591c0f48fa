#include "kserver/metric_space.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "kserver/error.hpp"

namespace kserver {

MetricSpace::MetricSpace(int n, std::vector<std::int64_t> flat)
    : n_(n), dist_(std::move(flat)) {
  if (n_ < 1) throw Error("InvalidMetric", "need at least one point");
  if (dist_.size() != static_cast<std::size_t>(n_) * n_)
    throw Error("InvalidMetric", "distance matrix has wrong shape");
  for (int a = 0; a < n_; ++a) {
    if (dist(a, a) != 0) throw Error("InvalidMetric", "nonzero diagonal");
    for (int b = 0; b < n_; ++b) {
      if (dist(a, b) != dist(b, a)) throw Error("InvalidMetric", "asymmetric");
      if (a != b && dist(a, b) < 1)
        throw Error("InvalidMetric", "off-diagonal distance below 1");
      diameter_ = std::max(diameter_, dist(a, b));
    }
  }
  for (int a = 0; a < n_; ++a)
    for (int b = 0; b < n_; ++b)
      for (int c = 0; c < n_; ++c)
        if (dist(a, c) > dist(a, b) + dist(b, c))
          throw Error("InvalidMetric", "triangle inequality fails");
}

MetricSpace MetricSpace::uniform(int n) {
  std::vector<std::int64_t> d(static_cast<std::size_t>(n) * n, 1);
  for (int a = 0; a < n; ++a) d[a * n + a] = 0;
  return MetricSpace(n, std::move(d));
}

std::string MetricSpace::to_json() const {
  nlohmann::ordered_json doc;
  doc["n"] = n_;
  doc["dist"] = nlohmann::ordered_json::array();
  for (int a = 0; a < n_; ++a) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int b = 0; b < n_; ++b) row.push_back(dist(a, b));
    doc["dist"].push_back(row);
  }
  return doc.dump();
}

MetricSpace MetricSpace::from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  const int n = doc.at("n").get<int>();
  std::vector<std::int64_t> d;
  d.reserve(static_cast<std::size_t>(n) * n);
  for (const auto& row : doc.at("dist"))
    for (const auto& cell : row) d.push_back(cell.get<std::int64_t>());
  return MetricSpace(n, std::move(d));
}

}  // namespace kserver
