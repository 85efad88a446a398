#ifndef S3C_SRC_JSON_CODEC_HPP
#define S3C_SRC_JSON_CODEC_HPP

#include "json.hpp"
#include "s3c/inference.hpp"
#include "s3c/pipeline.hpp"

namespace s3c::detail {

using nlohmann::json;

json inference_to_json(const InferenceConfig& cfg);
// Reads known keys from obj into cfg, erasing them from `unused`.
void inference_from_json(const json& obj, InferenceConfig& cfg, json* unused = nullptr);

json pooling_to_json(const PoolingConfig& cfg);
void pooling_from_json(const json& obj, PoolingConfig& cfg, json* unused = nullptr);

}  // namespace s3c::detail

#endif  // S3C_SRC_JSON_CODEC_HPP
