/**
 * Per-sentence ordered submission queue.
 *
 * Corrections for the same sentence must reach the server in the order the
 * reviewer made them, so each key (codebook|turn|sent) owns a promise chain:
 * a new task starts only once the previous one settled. Rapid successive
 * edits therefore replay in order in the server's corrections log, and the
 * last submission is the one whose acknowledgment finalizes the chip —
 * callers check {@link EditQueue.latest} against the sequence number they
 * captured at enqueue time.
 */

export class EditQueue {
  private readonly tails = new Map<string, Promise<unknown>>();
  private readonly seqs = new Map<string, number>();

  /** Allocate the next sequence number for a key (captured by the caller). */
  next(key: string): number {
    const seq = (this.seqs.get(key) ?? 0) + 1;
    this.seqs.set(key, seq);
    return seq;
  }

  /** Highest sequence number handed out for the key so far. */
  latest(key: string): number {
    return this.seqs.get(key) ?? 0;
  }

  /**
   * Run `task` after every previously queued task for `key` has settled.
   * A failed predecessor does not block the chain.
   */
  push<T>(key: string, task: () => Promise<T>): Promise<T> {
    const prev = this.tails.get(key) ?? Promise.resolve();
    const run = prev.then(task, task);
    this.tails.set(
      key,
      run.then(
        () => undefined,
        () => undefined,
      ),
    );
    return run;
  }
}
