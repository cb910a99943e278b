/**
 * Reader for the canonical transcript text the service stores as the
 * `transcript.txt` artifact of every job.
 *
 * The artifact is the server's own normalized rendering, so its line grammar
 * is fixed: `[MM:SS]` block headers, `[silence HH:MM:SS]` gaps, and
 * `Speaker: text` turns. Turn indices count silence turns (the service's
 * annotation coordinates do too), and sentence boundaries within a turn are
 * runs of `.?!` followed by whitespace or end-of-text — the same rule the
 * service applies, so a chip at (turn, sent) lands on the right sentence.
 *
 * This module never invents or interprets labels; it only recovers the text
 * layout needed to display the server's annotation JSON.
 */

const BLOCK_RE = /^\[(\d{1,4}):([0-5]\d)\]$/;
const SILENCE_RE = /^\[silence (\d{2,4}):([0-5]\d):([0-5]\d)\]$/;
const SENTENCE_END_RE = /[.?!]+(?=\s|$)/g;

export interface ViewTurn {
  index: number;
  speaker: string;
  silence: boolean;
  silenceSeconds: number;
  sentences: string[];
}

export interface ViewTranscript {
  turns: ViewTurn[];
}

/** Split turn text into trimmed sentences, mirroring the service's rule. */
export function splitSentences(text: string): string[] {
  const sentences: string[] = [];
  let start = 0;
  SENTENCE_END_RE.lastIndex = 0;
  for (const match of text.matchAll(SENTENCE_END_RE)) {
    const end = (match.index ?? 0) + match[0].length;
    const piece = text.slice(start, end).trim();
    if (piece) {
      sentences.push(piece);
    }
    start = end;
  }
  const tail = text.slice(start).trim();
  if (tail) {
    sentences.push(tail);
  }
  return sentences;
}

/**
 * Parse a canonical transcript rendering into displayable turns.
 *
 * Unrecognized lines are skipped rather than rejected: the server already
 * validated the transcript, so anything surprising here is a display-only
 * concern and must not break the page.
 */
export function parseCanonicalTranscript(text: string): ViewTranscript {
  const turns: ViewTurn[] = [];
  for (const rawLine of text.split("\n")) {
    const line = rawLine.trim();
    if (!line || BLOCK_RE.test(line)) {
      continue;
    }
    const silence = SILENCE_RE.exec(line);
    if (silence) {
      const seconds =
        Number(silence[1]) * 3600 + Number(silence[2]) * 60 + Number(silence[3]);
      turns.push({
        index: turns.length,
        speaker: "",
        silence: true,
        silenceSeconds: seconds,
        sentences: [],
      });
      continue;
    }
    const sep = line.indexOf(": ");
    if (sep < 0) {
      continue;
    }
    turns.push({
      index: turns.length,
      speaker: line.slice(0, sep),
      silence: false,
      silenceSeconds: 0,
      sentences: splitSentences(line.slice(sep + 2)),
    });
  }
  return { turns };
}
