// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/labelstore.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "notecraft/errors.hpp"
#include "notecraft/rng.hpp"

namespace notecraft {

using nlohmann::json;

namespace {

constexpr const char* kTasksFile = "tasks.jsonl";
constexpr const char* kLabelsFile = "labels.jsonl";

// Appends `lines` and fsyncs before returning.
void append_durable(const std::filesystem::path& path, const std::string& lines) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("io", fmt::format("open {}: {}", path.string(), std::strerror(errno)));
  std::size_t done = 0;
  while (done < lines.size()) {
    const auto n = ::write(fd, lines.data() + done, lines.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw Error("io", fmt::format("write {}: {}", path.string(), std::strerror(err)));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error("io", fmt::format("fsync {}: {}", path.string(), std::strerror(err)));
  }
  ::close(fd);
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
}

json task_to_json(const LabelTask& t) {
  return json{{"task_id", t.task_id},         {"case_id", t.case_id},
              {"round", t.round},             {"prompt_text", t.prompt_text},
              {"candidates", t.candidates},   {"permutation", t.permutation},
              {"temperatures", t.temperatures}, {"candidate_tokens", t.candidate_tokens}};
}

LabelTask task_from_json(const json& j) {
  LabelTask t;
  t.task_id = j.at("task_id").get<std::string>();
  t.case_id = j.at("case_id").get<std::string>();
  t.round = j.at("round").get<std::size_t>();
  t.prompt_text = j.at("prompt_text").get<std::string>();
  t.candidates = j.at("candidates").get<std::vector<std::string>>();
  t.permutation = j.at("permutation").get<std::vector<std::size_t>>();
  t.temperatures = j.at("temperatures").get<std::vector<double>>();
  t.candidate_tokens = j.at("candidate_tokens").get<std::vector<TokenSeq>>();
  return t;
}

json label_to_json(const StoredLabel& l) {
  json j{{"task_id", l.task_id}, {"most", l.most}, {"least", l.least}, {"sequence", l.sequence}};
  if (l.edited_preferred) j["edited_preferred"] = *l.edited_preferred;
  return j;
}

StoredLabel label_from_json(const json& j) {
  StoredLabel l;
  l.task_id = j.at("task_id").get<std::string>();
  l.most = j.at("most").get<std::size_t>();
  l.least = j.at("least").get<std::size_t>();
  l.sequence = j.value("sequence", std::uint64_t{0});
  if (auto it = j.find("edited_preferred"); it != j.end()) l.edited_preferred = it->get<std::string>();
  return l;
}

}  // namespace

std::vector<std::size_t> blind_permutation(std::uint64_t seed, const std::string& task_id,
                                           std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, {0xb11d, fnv1a(task_id)}));
  rng.shuffle(std::span<std::size_t>(perm));
  return perm;
}

std::string render_note_text(const Vocab& vocab, std::span<const TokenId> note) {
  if (!note.empty() && note.back() == Vocab::kEos) note = note.first(note.size() - 1);
  return vocab.render(note);
}

LabelStore::LabelStore(std::filesystem::path dir, Vocab vocab, std::uint64_t blind_seed)
    : dir_(std::move(dir)), vocab_(std::move(vocab)), blind_seed_(blind_seed) {
  std::filesystem::create_directories(dir_);
  std::lock_guard lock(mu_);
  refresh_tasks_locked();
  reload_labels_locked();
}

void LabelStore::refresh_tasks_locked() const {
  const auto path = dir_ / kTasksFile;
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  in.seekg(static_cast<std::streamoff>(tasks_offset_));
  std::string line;
  while (std::getline(in, line)) {
    if (in.eof()) break;  // partial line still being written
    tasks_offset_ += line.size() + 1;
    if (line.empty()) continue;
    try {
      auto t = task_from_json(json::parse(line));
      if (index_.contains(t.task_id)) continue;
      index_[t.task_id] = tasks_.size();
      tasks_.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
    }
  }
}

void LabelStore::reload_labels_locked() const {
  labels_.clear();
  for_each_line(dir_ / kLabelsFile, [&](const json& j) {
    auto l = label_from_json(j);
    labels_.emplace(l.task_id, std::move(l));  // first label wins
  });
}

void LabelStore::publish(std::span<const LabelRequest> requests) {
  std::lock_guard lock(mu_);
  refresh_tasks_locked();
  std::string lines;
  std::set<std::string> fresh;
  for (const auto& req : requests) {
    std::vector<TokenSeq> tokens;
    std::vector<double> temps;
    for (const auto& c : req.candidates) {
      tokens.push_back(c.tokens);
      temps.push_back(c.temperature);
    }
    if (fresh.contains(req.task_id)) continue;
    if (auto it = index_.find(req.task_id); it != index_.end()) {
      if (tasks_[it->second].candidate_tokens != tokens) {
        throw ConflictError(fmt::format(
            "label store: task {} was published with different candidates", req.task_id));
      }
      continue;
    }
    LabelTask t;
    t.task_id = req.task_id;
    t.case_id = req.prompt->case_id;
    t.round = req.round;
    t.prompt_text = vocab_.render(req.prompt->dialogue);
    t.permutation = blind_permutation(blind_seed_, req.task_id, tokens.size());
    for (auto true_index : t.permutation) {
      t.candidates.push_back(render_note_text(vocab_, tokens[true_index]));
    }
    t.temperatures = std::move(temps);
    t.candidate_tokens = std::move(tokens);
    lines += task_to_json(t).dump() + '\n';
    fresh.insert(t.task_id);
  }
  if (lines.empty()) return;
  append_durable(dir_ / kTasksFile, lines);
  refresh_tasks_locked();
}

std::optional<TaskView> LabelStore::next_open() const {
  std::lock_guard lock(mu_);
  refresh_tasks_locked();
  for (const auto& t : tasks_) {
    if (!labels_.contains(t.task_id)) return TaskView{t.task_id, t.prompt_text, t.candidates};
  }
  return std::nullopt;
}

std::optional<LabelTask> LabelStore::task(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  refresh_tasks_locked();
  if (auto it = index_.find(task_id); it != index_.end()) return tasks_[it->second];
  return std::nullopt;
}

std::vector<LabelTask> LabelStore::tasks() const {
  std::lock_guard lock(mu_);
  refresh_tasks_locked();
  return tasks_;
}

StoredLabel LabelStore::submit(const std::string& task_id, std::size_t most_shown,
                               std::size_t least_shown,
                               const std::optional<std::string>& edited_preferred) {
  std::lock_guard lock(mu_);
  refresh_tasks_locked();
  const auto it = index_.find(task_id);
  if (it == index_.end()) throw NotFoundError(fmt::format("unknown task {}", task_id));
  const auto& t = tasks_[it->second];
  if (labels_.contains(task_id)) throw ConflictError(fmt::format("task {} is already labeled", task_id));
  const std::size_t n = t.permutation.size();
  if (most_shown >= n || least_shown >= n) {
    throw InputError(fmt::format("most and least must be in [0, {})", n));
  }
  if (most_shown == least_shown) throw InputError("most and least must differ");
  if (edited_preferred) {
    const auto tokens = vocab_.tokenize(*edited_preferred);  // InputError on unknown symbols
    bool has_content = false;
    for (TokenId tok : tokens) has_content |= !Vocab::is_special(tok);
    if (!has_content) throw InputError("edited_preferred is empty");
  }
  StoredLabel l;
  l.task_id = task_id;
  l.most = t.permutation[most_shown];
  l.least = t.permutation[least_shown];
  l.edited_preferred = edited_preferred;
  l.sequence = labels_.size() + 1;
  append_durable(dir_ / kLabelsFile, label_to_json(l).dump() + '\n');
  labels_.emplace(task_id, l);
  return l;
}

std::optional<StoredLabel> LabelStore::label(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  if (auto it = labels_.find(task_id); it != labels_.end()) return it->second;
  return std::nullopt;
}

LabelProgress LabelStore::progress() const {
  std::lock_guard lock(mu_);
  refresh_tasks_locked();
  LabelProgress p;
  p.total = tasks_.size();
  for (const auto& t : tasks_) p.labeled += labels_.contains(t.task_id);
  return p;
}

bool LabelStore::wait_for_labels(std::span<const std::string> task_ids,
                                 std::chrono::milliseconds timeout) const {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    {
      std::lock_guard lock(mu_);
      reload_labels_locked();
      bool all = true;
      for (const auto& id : task_ids) all = all && labels_.contains(id);
      if (all) return true;
    }
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
}

std::vector<std::optional<LabelDecision>> StoreLabelSource::collect(
    std::span<const LabelRequest> requests) {
  store_.publish(requests);
  if (wait_.count() > 0) {
    std::vector<std::string> ids;
    for (const auto& r : requests) ids.push_back(r.task_id);
    store_.wait_for_labels(ids, wait_);
  }
  std::vector<std::optional<LabelDecision>> out;
  for (const auto& r : requests) {
    const auto l = store_.label(r.task_id);
    if (!l) {
      out.push_back(std::nullopt);
      continue;
    }
    LabelDecision d{l->most, l->least, std::nullopt};
    if (l->edited_preferred) d.edited_preferred = store_.vocab().tokenize(*l->edited_preferred);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace notecraft
