#include "lamkit/model.hpp"

#include "lamkit/errors.hpp"

namespace lamkit {

using nlohmann::ordered_json;

std::vector<Monotone> directions_of(std::span<const ColumnInfo> columns) {
  std::vector<Monotone> out;
  out.reserve(columns.size());
  for (const auto& c : columns) out.push_back(c.direction);
  return out;
}

ordered_json to_json(const AdditiveModel& m) {
  ordered_json doc;
  doc["link"] = m.link == Link::Linearised ? "linearised" : "logistic";
  if (m.link == Link::Linearised) doc["alpha_star"] = m.alpha_star;
  doc["bias"] = m.bias;
  ordered_json cols = ordered_json::array();
  for (std::size_t i = 0; i < m.dim(); ++i) {
    cols.push_back({{"name", m.columns[i].name},
                    {"source", m.columns[i].source_feature},
                    {"direction", static_cast<int>(m.columns[i].direction)},
                    {"coefficient", m.coefficients[i]}});
  }
  doc["columns"] = std::move(cols);
  return doc;
}

AdditiveModel additive_model_from_json(const ordered_json& doc) {
  try {
    AdditiveModel m;
    const auto link = doc.at("link").get<std::string>();
    if (link == "linearised") {
      m.link = Link::Linearised;
      m.alpha_star = doc.at("alpha_star").get<double>();
      if (!(m.alpha_star > 0.0)) throw DataError("model: linearised link needs alpha_star > 0");
    } else if (link != "logistic") {
      throw DataError("model: unknown link '" + link + "'");
    }
    m.bias = doc.at("bias").get<double>();
    for (const auto& c : doc.at("columns")) {
      ColumnInfo info;
      info.name = c.at("name").get<std::string>();
      info.source_feature = c.value("source", std::string{});
      info.direction = static_cast<Monotone>(c.value("direction", 0));
      m.columns.push_back(std::move(info));
      m.coefficients.push_back(c.at("coefficient").get<double>());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

}  // namespace lamkit
