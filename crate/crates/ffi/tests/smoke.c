#include <stdio.h>
#include "graphtext.h"

int main(void) {
    char *json = NULL;
    if (gt_tokenize("Bank of France", &json) != GT_STATUS_OK) {
        return 1;
    }
    GtStatus missing = gt_tokenize(NULL, &json);
    const char *msg = gt_last_error_message();
    if (msg == NULL) {
        return 1;
    }
    printf("%s %d\n", json, (int)missing);
    gt_string_free(json);
    return 0;
}
