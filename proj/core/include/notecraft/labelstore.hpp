// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "notecraft/pipeline.hpp"
#include "notecraft/vocab.hpp"

namespace notecraft {

// A labeling task as kept server-side. `candidates` is in blinded order;
// permutation[shown] is the true candidate index.
struct LabelTask {
  std::string task_id;
  std::string case_id;
  std::size_t round = 0;
  std::string prompt_text;
  std::vector<std::string> candidates;
  std::vector<std::size_t> permutation;
  std::vector<double> temperatures;  // true order
  std::vector<TokenSeq> candidate_tokens;  // true order
};

// What a client sees: no permutation, temperatures or round.
struct TaskView {
  std::string task_id;
  std::string prompt_text;
  std::vector<std::string> candidates;
};

struct StoredLabel {
  std::string task_id;
  std::size_t most = 0;   // true indices
  std::size_t least = 0;
  std::optional<std::string> edited_preferred;  // verbatim client text
  std::uint64_t sequence = 0;
};

struct LabelProgress {
  std::size_t total = 0;
  std::size_t labeled = 0;
  std::size_t open() const { return total - labeled; }
};

// Directory-backed store: tasks.jsonl holds published tasks, labels.jsonl is
// an append-only log. Each label is fsync'ed before submit() returns. All
// methods are thread-safe; submits are serialized, so a task is labeled at
// most once.
class LabelStore {
 public:
  LabelStore(std::filesystem::path dir, Vocab vocab, std::uint64_t blind_seed);

  const std::filesystem::path& dir() const { return dir_; }
  const Vocab& vocab() const { return vocab_; }

  // Adds tasks for requests not yet published. Re-publishing an identical
  // task is a no-op; different candidates under a known id are a conflict.
  void publish(std::span<const LabelRequest> requests);

  std::optional<TaskView> next_open() const;
  std::optional<LabelTask> task(const std::string& task_id) const;
  std::vector<LabelTask> tasks() const;

  // `most_shown`/`least_shown` index the blinded candidate list. Throws
  // NotFoundError, ConflictError (already labeled) or InputError (invalid
  // indices, empty edit, or edit with symbols outside the vocabulary).
  StoredLabel submit(const std::string& task_id, std::size_t most_shown, std::size_t least_shown,
                     const std::optional<std::string>& edited_preferred);

  std::optional<StoredLabel> label(const std::string& task_id) const;
  LabelProgress progress() const;

  // Polls until every id is labeled or the timeout passes.
  bool wait_for_labels(std::span<const std::string> task_ids,
                       std::chrono::milliseconds timeout) const;

 private:
  // Reads task lines appended since the last call, so a long-running server
  // sees rounds published later by another process.
  void refresh_tasks_locked() const;
  void reload_labels_locked() const;

  std::filesystem::path dir_;
  Vocab vocab_;
  std::uint64_t blind_seed_;
  mutable std::mutex mu_;
  mutable std::vector<LabelTask> tasks_;
  mutable std::map<std::string, std::size_t> index_;
  mutable std::uintmax_t tasks_offset_ = 0;
  mutable std::map<std::string, StoredLabel> labels_;
};

// Blinded order for a task: a seeded shuffle of 0..n-1.
std::vector<std::size_t> blind_permutation(std::uint64_t seed, const std::string& task_id,
                                           std::size_t n);

// Display text of a note: rendered without the trailing EOS.
std::string render_note_text(const Vocab& vocab, std::span<const TokenId> note);

// Label source backed by a store: publishes each request and returns the
// decisions already submitted for it.
class StoreLabelSource final : public LabelSource {
 public:
  explicit StoreLabelSource(LabelStore& store, std::chrono::milliseconds wait = {})
      : store_(store), wait_(wait) {}
  std::vector<std::optional<LabelDecision>> collect(
      std::span<const LabelRequest> requests) override;

 private:
  LabelStore& store_;
  std::chrono::milliseconds wait_;
};

// HTTP front end over a store:
//   GET  /api/v1/tasks/next        200 {task_id, prompt_text, candidates[]} | 204
//   POST /api/v1/tasks/{id}/label  {most, least, edited_preferred?}
//                                  200 | 404 | 409 | 422
//   GET  /api/v1/progress          200 {total, labeled, open}
// With a non-empty token every request needs "Authorization: Bearer <token>".
class LabelServer {
 public:
  LabelServer(LabelStore& store, std::string token = {});
  ~LabelServer();
  LabelServer(const LabelServer&) = delete;
  LabelServer& operator=(const LabelServer&) = delete;

  // Binds and returns the port; port 0 picks a free one.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void run();
  // bind() + run() on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace notecraft
