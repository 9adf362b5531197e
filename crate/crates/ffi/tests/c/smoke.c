#include <stdio.h>
#include <string.h>

#include "nids.h"

#define CHECK(expr)                                                             \
    do {                                                                        \
        NidsStatus s_ = (expr);                                                 \
        if (s_ != NIDS_STATUS_OK) {                                             \
            fprintf(stderr, "%s -> %d: %s\n", #expr, (int)s_, nids_last_error()); \
            return 1;                                                           \
        }                                                                       \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke <classifier.ckpt>\n");
        return 2;
    }
    size_t counts[5] = {67343, 45927, 11656, 995, 52};
    size_t plan[5];
    CHECK(nids_balance_plan(counts, 5, plan));
    if (plan[4] != 67291) return 3;

    NidsClassifier *clf = NULL;
    CHECK(nids_classifier_load(argv[1], &clf));
    size_t dim = 0, classes = 0;
    CHECK(nids_classifier_dims(clf, &dim, &classes));
    double x[64] = {0};
    double probs[16];
    uint32_t label = 99;
    CHECK(nids_classifier_predict(clf, x, 1, dim, probs, classes, &label));
    double total = 0;
    for (size_t i = 0; i < classes; i++) total += probs[i];
    nids_classifier_free(clf);

    NidsClassifier *none = NULL;
    if (nids_classifier_load("/nonexistent", &none) != NIDS_STATUS_IO || strlen(nids_last_error()) == 0) return 4;

    printf("dim=%zu classes=%zu label=%u sum=%.12f\n", dim, classes, label, total);
    return (total > 0.999999 && total < 1.000001 && label < classes) ? 0 : 5;
}
