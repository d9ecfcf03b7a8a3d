#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "fricid/identifier.hpp"
#include "fricid/model.hpp"

namespace fricid {

/// Line-oriented CSV writer. The first line is a `# config_hash=...`
/// comment, the second the header; doubles print with full round-trip
/// precision so fixed seeds give byte-identical files.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::uint64_t config_hash,
            const std::vector<std::string>& columns);

  void begin_row();
  void field(double x);
  void field(const std::string& s);
  void field(int x);
  void end_row();

 private:
  std::ofstream out_;
  std::size_t n_cols_;
  std::size_t in_row_ = 0;
};

std::string format_double(double x);

/// Buffer-entry stream schema for one model: t, base pose (position +
/// quaternion wxyz), base twist, joint state, inputs, then per contact the
/// flag and estimated foot velocity.
std::vector<std::string> stream_columns(const RobotModel& model);

void write_stream_csv(const std::string& path, const RobotModel& model,
                      const std::vector<BufferEntry>& stream,
                      std::uint64_t config_hash);

std::vector<BufferEntry> read_stream_csv(const std::string& path,
                                         const RobotModel& model);

}  // namespace fricid
