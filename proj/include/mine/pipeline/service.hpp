#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mine/calibration/calibration.hpp"
#include "mine/data/corpus.hpp"

namespace httplib {
class Server;
}

// HTTP front of the calibration loop. Serves pairs to annotators, records
// their labels in the append-only log and reports agreement and live
// threshold curves over the resolved labels.
//
//   GET  /api/health
//   GET  /api/pairs/next?annotator=ID
//   GET  /api/images/<pair_id>              image/x-portable-pixmap
//   POST /api/labels      {pair_id, annotator, label, guideline_tag?, overwrite?}
//   GET  /api/agreement[?a=ID&b=ID]
//   GET  /api/curves[?grid=lo,hi,step][&format=csv]
//   POST /api/threshold   {policy[, grid]}
namespace mine::pipeline {

struct ServiceConfig {
  std::vector<data::PairRecord> pairs;  // served in this order
  std::filesystem::path annotation_log;
  std::filesystem::path image_root;     // image paths are relative to it
  std::filesystem::path threshold_path;  // written by POST /api/threshold
  std::size_t num_categories = 0;       // coverage denominator; 0: distinct categories of pairs
  std::vector<double> grid = calibration::default_grid();  // when a request names none
  std::string cors_origin = "*";
};

class AnnotationService {
 public:
  explicit AnnotationService(ServiceConfig config);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  // Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks serving requests until stop().
  void listen();
  void stop();

  httplib::Server& server();
  const calibration::AnnotationStore& store() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Guideline reminders sent with every pair.
const std::vector<std::string>& guideline_reminders();

}  // namespace mine::pipeline
