//! The per-rank probing frame and its fixed 1,184-byte binary layout.
//!
//! One frame per rank, reused forever: a 32-byte header plus eight
//! 144-byte blocks cycled by `round mod 8`. Each block holds the round's
//! 16-byte trace id and a send/recv counter pair for each of eight
//! channels.
//!
//! ```bash
//! cargo run -p commdiag --example frame_layout
//! ```

use commdiag::trace::{
    decode_frame, encode_frame, make_trace_id, CommunicatorId, Direction, ProbingFrame,
    FRAME_BYTES,
};

fn hex_row(bytes: &[u8], offset: usize) -> String {
    let row: Vec<String> = bytes[offset..offset + 16]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    format!("{offset:>6}: {}", row.join(" "))
}

fn main() {
    let frame = ProbingFrame::new(2, true).unwrap();

    // Run ten rounds so the body wraps: round 8 reuses block 0, round 9
    // reuses block 1.
    for round in 0..10u64 {
        let tid = make_trace_id(CommunicatorId(7), round, 0);
        let handle = frame.begin_round(tid).unwrap();
        frame.record(handle, 0, Direction::Send, round + 1).unwrap();
        frame.record(handle, 0, Direction::Recv, round + 1).unwrap();
        frame.record(handle, 1, Direction::Send, 2 * (round + 1)).unwrap();
    }

    let bytes = encode_frame(&frame);
    assert_eq!(bytes.len(), FRAME_BYTES);
    println!("frame is exactly {} bytes\n", bytes.len());

    println!("header (op_counter, mode_flag, kernel_index, num_channels):");
    println!("{}", hex_row(&bytes, 0));
    println!("{}\n", hex_row(&bytes, 16));

    // Block 0 currently belongs to round 8 (8 mod 8 == 0).
    println!("block 0 @ offset 32 (trace id, then per-channel counters):");
    for row in 0..3 {
        println!("{}", hex_row(&bytes, 32 + row * 16));
    }
    let snap = frame.read_block(0);
    println!(
        "\ndecoded block 0: comm={} round={} ch0=({}, {}) ch1=({}, {})",
        snap.trace_id.comm_id,
        snap.trace_id.op_counter,
        snap.counts[0].0,
        snap.counts[0].1,
        snap.counts[1].0,
        snap.counts[1].1,
    );
    assert_eq!(snap.trace_id.op_counter, 8);

    // The encoding is the interchange format: decoding gives back a frame
    // that re-encodes to the identical bytes.
    let decoded = decode_frame(&bytes).unwrap();
    assert_eq!(encode_frame(&decoded), bytes);
    println!("round trip: decode(encode(frame)) re-encodes bit-exactly");
}
