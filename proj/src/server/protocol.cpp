#include "precrash/server/protocol.hpp"

#include <algorithm>

namespace precrash::server {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadJson: return "BAD_JSON";
    case ErrorCode::UnknownType: return "UNKNOWN_TYPE";
    case ErrorCode::NotLoaded: return "NOT_LOADED";
    case ErrorCode::NotController: return "NOT_CONTROLLER";
    case ErrorCode::BadMode: return "BAD_MODE";
    case ErrorCode::VersionMismatch: return "VERSION_MISMATCH";
    case ErrorCode::OversizeFrame: return "OVERSIZE_FRAME";
  }
  return "BAD_JSON";
}

std::string encode_frame(std::string_view body) {
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(body);
  return out;
}

FrameDecoder::Status FrameDecoder::next(std::string& body) {
  if (broken_) return Status::Oversize;
  if (buffer_.size() - offset_ < 4) return Status::NeedMore;
  const auto byte = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(buffer_[offset_ + i])); };
  const std::uint32_t length = (byte(0) << 24) | (byte(1) << 16) | (byte(2) << 8) | byte(3);
  if (length > kMaxFrameBytes) {
    broken_ = true;
    return Status::Oversize;
  }
  if (buffer_.size() - offset_ < 4 + static_cast<std::size_t>(length)) return Status::NeedMore;
  body.assign(buffer_, offset_ + 4, length);
  offset_ += 4 + length;
  if (offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  } else if (offset_ > (1u << 16)) {
    buffer_.erase(0, offset_);
    offset_ = 0;
  }
  return Status::Frame;
}

std::string envelope(std::int64_t id, std::string_view type, const nlohmann::ordered_json& payload) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["type"] = type;
  j["payload"] = payload;
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string error_message(std::int64_t id, ErrorCode code, std::string_view detail) {
  nlohmann::ordered_json p;
  p["code"] = to_string(code);
  p["detail"] = detail;
  return envelope(id, "error", p);
}

bool Outbox::wake_locked() {
  if (!idle_) return false;
  idle_ = false;
  return true;
}

bool Outbox::push(std::string body) {
  std::lock_guard lock(mutex_);
  if (closing_) return false;
  items_.push_back({std::move(body), false});
  return wake_locked();
}

bool Outbox::push_fcd(std::string body) {
  std::lock_guard lock(mutex_);
  if (closing_) return false;
  if (fcd_queued_ >= fcd_capacity_) {
    auto oldest = std::find_if(items_.begin(), items_.end(), [](const Item& i) { return i.fcd; });
    items_.erase(oldest);
    --fcd_queued_;
    ++pending_dropped_;
    ++dropped_total_;
  }
  items_.push_back({std::move(body), true});
  ++fcd_queued_;
  return wake_locked();
}

std::optional<std::string> Outbox::pop() {
  std::lock_guard lock(mutex_);
  if (items_.empty()) {
    idle_ = true;
    return std::nullopt;
  }
  Item item = std::move(items_.front());
  items_.pop_front();
  if (item.fcd) {
    --fcd_queued_;
    if (pending_dropped_ > 0 && item.body.compare(0, kFcdPrefix.size(), kFcdPrefix) == 0) {
      const std::size_t zero = kFcdPrefix.size() - 2;  // the "0" before the trailing comma
      item.body.replace(zero, 1, std::to_string(pending_dropped_));
      pending_dropped_ = 0;
    }
  }
  return std::move(item.body);
}

bool Outbox::close_after_drain() {
  std::lock_guard lock(mutex_);
  closing_ = true;
  return wake_locked();
}

bool Outbox::closing() const {
  std::lock_guard lock(mutex_);
  return closing_;
}

std::uint64_t Outbox::dropped_total() const {
  std::lock_guard lock(mutex_);
  return dropped_total_;
}

std::size_t Outbox::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

}  // namespace precrash::server
