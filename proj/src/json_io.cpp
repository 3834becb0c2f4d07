#include "pencilrank/json_io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace pencilrank {

using nlohmann::json;

namespace {

Matrix parse_matrix(const json& j, Index m, Index n, const char* name) {
  if (!j.is_array() || static_cast<Index>(j.size()) != m)
    throw PencilError(std::string("field ") + name + " must be a " +
                      std::to_string(m) + "-row array");
  Matrix M(m, n);
  for (Index i = 0; i < m; ++i) {
    const json& row = j[i];
    if (!row.is_array() || static_cast<Index>(row.size()) != n)
      throw PencilError(std::string("field ") + name + " row " +
                        std::to_string(i) + " must have " + std::to_string(n) +
                        " entries");
    for (Index k = 0; k < n; ++k) {
      if (!row[k].is_number())
        throw PencilError(std::string("field ") + name + " has a non-numeric entry");
      M(i, k) = row[k].get<double>();
    }
  }
  return M;
}

Vector parse_vector(const json& j, Index len, const char* name) {
  if (!j.is_array() || static_cast<Index>(j.size()) != len)
    throw PencilError(std::string("field ") + name + " must have length " +
                      std::to_string(len));
  Vector v(len);
  for (Index i = 0; i < len; ++i) {
    if (!j[i].is_number())
      throw PencilError(std::string("field ") + name + " has a non-numeric entry");
    v(i) = j[i].get<double>();
  }
  return v;
}

Index parse_dim(const json& j, const char* name) {
  if (!j.contains(name) || !j[name].is_number_integer())
    throw PencilError(std::string("missing integer field ") + name);
  auto v = j[name].get<long long>();
  if (v < 1) throw PencilError(std::string("field ") + name + " must be positive");
  return static_cast<Index>(v);
}

void append_vector(std::string& out, const Vector& v) {
  out += '[';
  for (Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v(i));
  }
  out += ']';
}

void append_matrix(std::string& out, const Matrix& M) {
  out += '[';
  for (Index i = 0; i < M.rows(); ++i) {
    if (i) out += ',';
    append_vector(out, M.row(i).transpose());
  }
  out += ']';
}

}  // namespace

std::string format_double(double x) {
  if (x == 0.0) x = 0.0;  // normalize -0
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

Pencil parse_pencil(const std::string& json_text) {
  json j = json::parse(json_text);
  Index m = parse_dim(j, "m");
  Index n = parse_dim(j, "n");
  if (!j.contains("A") || !j.contains("B"))
    throw PencilError("tensor JSON must contain A and B");
  return Pencil(parse_matrix(j["A"], m, n, "A"), parse_matrix(j["B"], m, n, "B"));
}

Decomposition parse_decomposition(const std::string& json_text) {
  json j = json::parse(json_text);
  Decomposition D;
  D.m = parse_dim(j, "m");
  D.n = parse_dim(j, "n");
  if (!j.contains("terms") || !j["terms"].is_array())
    throw PencilError("decomposition JSON must contain a terms array");
  for (const json& jt : j["terms"]) {
    RankOneTerm t;
    Vector a = parse_vector(jt.at("alpha"), 2, "alpha");
    t.alpha = Vector2d(a(0), a(1));
    t.u = parse_vector(jt.at("u"), D.m, "u");
    t.v = parse_vector(jt.at("v"), D.n, "v");
    D.terms.push_back(std::move(t));
  }
  return D;
}

Pencil read_pencil_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PencilError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pencil(ss.str());
}

Decomposition read_decomposition_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PencilError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_decomposition(ss.str());
}

std::string pencil_to_json(const Pencil& T) {
  std::string out;
  out += "{\"m\":" + std::to_string(T.rows());
  out += ",\"n\":" + std::to_string(T.cols());
  out += ",\"A\":";
  append_matrix(out, T.A);
  out += ",\"B\":";
  append_matrix(out, T.B);
  out += "}\n";
  return out;
}

std::string decomposition_to_json(const Decomposition& D) {
  std::string out;
  out += "{\"m\":" + std::to_string(D.m);
  out += ",\"n\":" + std::to_string(D.n);
  out += ",\"terms\":[";
  bool first = true;
  for (const RankOneTerm& t : D.terms) {
    if (!first) out += ',';
    first = false;
    out += "{\"alpha\":";
    Vector a(2);
    a << t.alpha(0), t.alpha(1);
    append_vector(out, a);
    out += ",\"u\":";
    append_vector(out, t.u);
    out += ",\"v\":";
    append_vector(out, t.v);
    out += '}';
  }
  out += "]}\n";
  return out;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PencilError("cannot write " + path);
  out << contents;
}

}  // namespace pencilrank
