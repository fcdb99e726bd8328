//! Run-length mask encoding used on the wire.

use geared_radiance::rle::RleMask;
use geared_radiance::semantic::Mask;

fn main() {
    let (w, h) = (12, 6);
    let mut m = Mask::empty(w, h);
    for y in 1..4 {
        for x in 3..9 {
            m.set(x, y, true);
        }
    }
    let rle = RleMask::encode(&m);
    println!("{}", serde_json::to_string(&rle).unwrap());
    let back = rle.decode().unwrap();
    assert_eq!(back, m);
    println!("{} foreground pixels, bbox {:?}", rle.foreground(), back.bbox());
    // malformed runs are rejected rather than clipped
    let bad: RleMask = serde_json::from_str(r#"{"width":4,"height":1,"runs":[[2,5]]}"#).unwrap();
    println!("overlong run: {}", bad.decode().unwrap_err());
}
