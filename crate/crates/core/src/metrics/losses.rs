// SPDX-License-Identifier: Apache-2.0

//! Loss-of-contact counting with a debounce.

/// Contact changes shorter than this are ignored, s.
pub const DEBOUNCE: f64 = 0.05;

/// Count debounced contact-to-no-contact transitions between first and last contact.
///
/// The signal is split into runs of equal value; a run changes the debounced
/// state only if it lasts at least `debounce` (measured to the start of the
/// following run).
pub fn contact_losses(t: &[f64], contact: &[bool], debounce: f64) -> usize {
    let Some(first) = contact.iter().position(|&c| c) else {
        return 0;
    };
    let last = contact.iter().rposition(|&c| c).expect("has contact");
    let mut state = true;
    let mut losses = 0;
    let mut i = first;
    while i <= last {
        let value = contact[i];
        let mut j = i;
        while j <= last && contact[j] == value {
            j += 1;
        }
        // Run [i, j); it ends where the next run begins.
        let end = if j <= last { t[j] } else { t[last] };
        if value != state && end - t[i] >= debounce {
            if state {
                losses += 1;
            }
            state = value;
        }
        i = j;
    }
    losses
}
