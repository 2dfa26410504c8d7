#include "spare/dataset.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spare {

namespace {

using nlohmann::json;

void append_real(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void append_quoted(std::string& out, const std::string& s) {
  out += '"';
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
}

void append_state(std::string& out, const State& s) {
  out += '[';
  for (int o = 0; o < s.num_objects(); ++o) {
    if (o) out += ',';
    out += '[';
    for (int p = 0; p < s.num_properties(); ++p) {
      if (p) out += ',';
      append_real(out, s(o, p));
    }
    out += ']';
  }
  out += ']';
}

State state_from_json(const json& rows, int num_properties, int num_objects) {
  if (static_cast<int>(rows.size()) != num_objects)
    throw std::invalid_argument("dataset: state row count does not match objects");
  State s(num_properties, num_objects);
  for (int o = 0; o < num_objects; ++o) {
    const auto& row = rows.at(static_cast<std::size_t>(o));
    if (static_cast<int>(row.size()) != num_properties)
      throw std::invalid_argument("dataset: state column count does not match props");
    for (int p = 0; p < num_properties; ++p) s.at(o, p) = row.at(static_cast<std::size_t>(p)).get<double>();
  }
  if (!s.all_finite()) throw std::invalid_argument("dataset: non-finite state entry");
  return s;
}

}  // namespace

std::string experience_to_json_line(const Experience& e) {
  const auto& inst = *e.instance;
  const auto& domain = *inst.domain;
  std::string out;
  out.reserve(256);
  out += "{\"instance\":";
  append_quoted(out, inst.id);
  out += ",\"objects\":[";
  for (std::size_t i = 0; i < inst.object_ids.size(); ++i) {
    if (i) out += ',';
    append_quoted(out, inst.object_ids[i]);
  }
  out += "],\"props\":[";
  for (std::size_t i = 0; i < domain.properties.size(); ++i) {
    if (i) out += ',';
    append_quoted(out, domain.properties[i]);
  }
  out += "],\"state\":";
  append_state(out, e.state);
  out += ",\"action\":{\"template\":";
  append_quoted(out, domain.action_templates.at(static_cast<std::size_t>(e.action.template_id)).name);
  out += ",\"alpha\":[";
  for (int i = 0; i < e.action.alpha.size(); ++i) {
    if (i) out += ',';
    append_real(out, e.action.alpha(i));
  }
  out += "],\"targets\":[";
  for (std::size_t i = 0; i < e.action.targets.size(); ++i) {
    if (i) out += ',';
    append_quoted(out, inst.object_ids.at(static_cast<std::size_t>(e.action.targets[i])));
  }
  out += "]},\"next_state\":";
  append_state(out, e.next_state);
  out += '}';
  return out;
}

void write_dataset(const std::string& path, const std::vector<Experience>& experiences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open dataset file for writing: " + path);
  for (const auto& e : experiences) {
    out << experience_to_json_line(e) << '\n';
  }
}

Experience experience_from_json_line(const Domain& domain, const std::string& line) {
  json j = json::parse(line);
  auto instance = std::make_shared<ProblemInstance>();
  instance->domain = &domain;
  instance->id = j.at("instance").get<std::string>();
  instance->object_ids = j.at("objects").get<std::vector<std::string>>();

  auto props = j.at("props").get<std::vector<std::string>>();
  if (props != domain.properties)
    throw std::invalid_argument("dataset: property list does not match domain");

  int nu = instance->num_objects();
  int np = domain.num_properties();
  Experience e;
  e.state = state_from_json(j.at("state"), np, nu);
  e.next_state = state_from_json(j.at("next_state"), np, nu);

  const auto& ja = j.at("action");
  e.action.template_id = domain.template_index(ja.at("template").get<std::string>());
  auto alpha = ja.at("alpha").get<std::vector<double>>();
  const auto& tmpl = domain.action_templates.at(static_cast<std::size_t>(e.action.template_id));
  if (static_cast<int>(alpha.size()) != tmpl.param_dim)
    throw std::invalid_argument("dataset: alpha length does not match template");
  e.action.alpha = Eigen::Map<Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  for (const auto& tid : ja.at("targets").get<std::vector<std::string>>())
    e.action.targets.push_back(instance->object_index(tid));
  if (static_cast<int>(e.action.targets.size()) != tmpl.arity)
    throw std::invalid_argument("dataset: target count does not match template arity");

  e.instance = std::move(instance);
  return e;
}

std::vector<Experience> read_dataset(const std::string& path, const Domain& domain) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::vector<Experience> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(experience_from_json_line(domain, line));
  }
  return out;
}

}  // namespace spare
