#include "restorerid/pipeline.h"

namespace rid {

std::vector<EvalItem> eval_items_from_corpus(const CorpusManifest& corpus,
                                             bool heldout_only, int max_n) {
  std::vector<int> ids;
  if (heldout_only) {
    ids = corpus.identity_labels(true);
    if (ids.empty()) throw ValidationError("eval: corpus has no held-out identities");
  } else {
    ids = corpus.identity_labels(false);
    std::vector<int> held = corpus.identity_labels(true);
    ids.insert(ids.end(), held.begin(), held.end());
  }

  std::vector<EvalItem> items;
  for (int id : ids) {
    if (max_n > 0 && static_cast<int>(items.size()) >= max_n) break;
    auto vars = corpus.entries_of(id);
    if (vars.size() < 2) continue;
    EvalItem it;
    it.id_label = id;
    it.gt = load_png(corpus.dir + "/" + vars[0]->path);
    it.ref = load_png(corpus.dir + "/" + vars[1]->path);
    items.push_back(std::move(it));
  }
  if (items.empty()) throw ValidationError("eval: no identities with >= 2 variations");
  return items;
}

}  // namespace rid
