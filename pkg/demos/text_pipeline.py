"""From three raw chat turns to a padded id sequence, step by step."""

from emoconv.textprep import (EOS_TOKEN, Vocabulary, assemble_input,
                              build_vocab, clean_text, encode_ids, tokenize)

# -- 1. cleaning -------------------------------------------------------------
# Runs of the same punctuation mark collapse to one; mixed runs survive.

raw = "WHY   would you do that....  seriously!!!"
print("raw:     ", raw)
print("cleaned: ", clean_text(raw))

# -- 2. tokenizing -----------------------------------------------------------
# Lowercase, split common contractions, keep emoji and stray symbols.

for text in ("I don't know", "You're KIDDING me", "c'mon :) ok"):
    print(f"{text!r:26} -> {tokenize(clean_text(text))}")

# -- 3. assembling a conversation --------------------------------------------
# The three turns join into one token stream with an end-of-utterance marker
# between them, so the encoder can tell where each speaker stopped.

turns = ("What happened", "you tell me first", "I'm not angry anymore")
seq = assemble_input(turns)
print("\nassembled:", seq.tokens)
print("separator count:", seq.tokens.count(EOS_TOKEN))

# -- 4. vocabulary and ids ---------------------------------------------------
# Ids 0/1/2 are reserved for padding, unknown words, and the separator; real
# tokens number from 3 in order of first appearance in the training split.

vocab = build_vocab([seq])
print("\nvocabulary size:", vocab.size)
print("first rows:", vocab.id_to_token[:8])

encoded = encode_ids(seq, vocab)
print("ids:", encoded.ids)

# Unseen words map to the unknown id instead of growing the table.
other = assemble_input(("What", "ever", "zzzunseen word"))
print("with unseen words:", encode_ids(other, vocab).ids)
