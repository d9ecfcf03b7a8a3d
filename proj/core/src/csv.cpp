#include "fricid/csv.hpp"

#include <cstdio>
#include <sstream>

#include "fricid/errors.hpp"

namespace fricid {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, std::uint64_t config_hash,
                     const std::vector<std::string>& columns)
    : out_(path), n_cols_(columns.size()) {
  if (!out_) throw Error("cannot open output file: " + path);
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash));
  out_ << "# config_hash=" << hash << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i)
    out_ << columns[i] << (i + 1 < columns.size() ? "," : "");
  out_ << "\n";
}

void CsvWriter::begin_row() { in_row_ = 0; }

void CsvWriter::field(double x) {
  if (in_row_++) out_ << ",";
  out_ << format_double(x);
}

void CsvWriter::field(const std::string& s) {
  if (in_row_++) out_ << ",";
  out_ << s;
}

void CsvWriter::field(int x) {
  if (in_row_++) out_ << ",";
  out_ << x;
}

void CsvWriter::end_row() {
  if (in_row_ != n_cols_)
    throw Error("csv row has " + std::to_string(in_row_) + " fields, expected " +
                std::to_string(n_cols_));
  out_ << "\n";
}

std::vector<std::string> stream_columns(const RobotModel& model) {
  std::vector<std::string> cols = {"t",  "px", "py", "pz", "qw", "qx", "qy",
                                   "qz", "wx", "wy", "wz", "vx", "vy", "vz"};
  for (int j = 0; j < model.n_joints(); ++j)
    cols.push_back("q_jnt_" + std::to_string(j));
  for (int j = 0; j < model.n_joints(); ++j)
    cols.push_back("qdot_jnt_" + std::to_string(j));
  for (int j = 0; j < model.na(); ++j)
    cols.push_back("tau_" + std::to_string(j));
  for (int j = 0; j < 6; ++j) cols.push_back("fext_" + std::to_string(j));
  for (std::size_t k = 0; k < model.contact_points.size(); ++k) {
    const std::string s = std::to_string(k);
    cols.push_back("c_" + s);
    cols.push_back("v_" + s + "_x");
    cols.push_back("v_" + s + "_y");
    cols.push_back("v_" + s + "_z");
  }
  return cols;
}

void write_stream_csv(const std::string& path, const RobotModel& model,
                      const std::vector<BufferEntry>& stream,
                      std::uint64_t config_hash) {
  CsvWriter w(path, config_hash, stream_columns(model));
  for (const BufferEntry& e : stream) {
    Eigen::Quaterniond q(e.R);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    w.begin_row();
    w.field(e.t);
    for (int i = 0; i < 3; ++i) w.field(e.p(i));
    w.field(q.w());
    w.field(q.x());
    w.field(q.y());
    w.field(q.z());
    for (int i = 0; i < 3; ++i) w.field(e.omega(i));
    for (int i = 0; i < 3; ++i) w.field(e.p_dot(i));
    for (int i = 0; i < e.q_jnt.size(); ++i) w.field(e.q_jnt(i));
    for (int i = 0; i < e.qdot_jnt.size(); ++i) w.field(e.qdot_jnt(i));
    for (int i = 0; i < e.tau.size(); ++i) w.field(e.tau(i));
    for (int i = 0; i < 6; ++i)
      w.field(i < e.f_ext.size() ? e.f_ext(i) : 0.0);
    for (std::size_t k = 0; k < e.contact.size(); ++k) {
      w.field(static_cast<int>(e.contact[k]));
      for (int i = 0; i < 3; ++i) w.field(e.foot_vel[k](i));
    }
    w.end_row();
  }
}

std::vector<BufferEntry> read_stream_csv(const std::string& path,
                                         const RobotModel& model) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stream csv: " + path);
  const std::vector<std::string> cols = stream_columns(model);
  std::string line;
  // Skip comments, then validate the header.
  std::string header;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    header = line;
    break;
  }
  {
    std::ostringstream expect;
    for (std::size_t i = 0; i < cols.size(); ++i)
      expect << cols[i] << (i + 1 < cols.size() ? "," : "");
    if (header != expect.str())
      throw Error("stream csv header does not match the model schema");
  }

  std::vector<BufferEntry> out;
  const int nj = model.n_joints();
  const int na = model.na();
  const int np = static_cast<int>(model.contact_points.size());
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> v;
    std::istringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
    if (v.size() != cols.size())
      throw Error("stream csv row has wrong field count");

    BufferEntry e;
    int i = 0;
    e.t = v[i++];
    for (int d = 0; d < 3; ++d) e.p(d) = v[i++];
    Eigen::Quaterniond q(v[i], v[i + 1], v[i + 2], v[i + 3]);
    i += 4;
    q.normalize();
    e.R = q.toRotationMatrix();
    for (int d = 0; d < 3; ++d) e.omega(d) = v[i++];
    for (int d = 0; d < 3; ++d) e.p_dot(d) = v[i++];
    e.q_jnt.resize(nj);
    for (int d = 0; d < nj; ++d) e.q_jnt(d) = v[i++];
    e.qdot_jnt.resize(nj);
    for (int d = 0; d < nj; ++d) e.qdot_jnt(d) = v[i++];
    e.tau.resize(na);
    for (int d = 0; d < na; ++d) e.tau(d) = v[i++];
    e.f_ext.resize(6);
    for (int d = 0; d < 6; ++d) e.f_ext(d) = v[i++];
    e.contact.resize(np);
    e.foot_vel.resize(np);
    e.rejected.assign(np, 0);
    for (int k = 0; k < np; ++k) {
      e.contact[k] = v[i++] != 0.0 ? 1 : 0;
      for (int d = 0; d < 3; ++d) e.foot_vel[k](d) = v[i++];
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace fricid
