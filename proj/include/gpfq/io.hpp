#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gpfq/network.hpp"

namespace gpfq {

enum class ArchiveError {
    bad_magic,
    version_mismatch,
    truncated,
    bad_manifest,
    offset_overflow,
    shape_composition,
};

class ArchiveException : public std::runtime_error {
public:
    ArchiveException(ArchiveError code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    ArchiveError code() const { return code_; }

private:
    ArchiveError code_;
};

/// Model container: magic "NNQM", u32 version, u64 manifest length, JSON
/// manifest, u64 blob length, blob of little-endian float32 tensors. Tensor
/// offsets must tile the blob exactly in manifest order.
void save_model(const NetworkModel& model, const std::string& path);
NetworkModel load_model(const std::string& path);

/// Data container: magic "NNQD", u32 version, u32 m, u32 rank, u32 dims,
/// then m * prod(dims) little-endian float32 values, sample-major.
void save_data(const Eigen::MatrixXd& rows, const TensorShape& sample_shape,
               const std::string& path);
std::pair<Eigen::MatrixXd, TensorShape> load_data(const std::string& path);

/// One integer class index per line.
std::vector<int> load_labels(const std::string& path);
void save_labels(const std::vector<int>& labels, const std::string& path);

}  // namespace gpfq
