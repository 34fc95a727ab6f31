//! Periodic table data: symbols, atomic numbers, standard atomic weights and
//! the default valences used for implicit hydrogen assignment.

/// Element record. `valences` is empty for elements outside the organic
/// subset; such atoms are only legal inside brackets and skip valence checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub symbol: &'static str,
    pub atomic_number: u8,
    pub mass: f64,
    pub valences: &'static [u8],
}

macro_rules! elements {
    ($( $sym:literal, $z:literal, $mass:literal, [$($v:literal),*] );* $(;)?) => {
        &[ $( Element { symbol: $sym, atomic_number: $z, mass: $mass, valences: &[$($v),*] } ),* ]
    };
}

/// Conventional standard atomic weights (hydrogen 1.008, carbon 12.011, ...).
pub static ELEMENTS: &[Element] = elements![
    "H", 1, 1.008, [1];
    "He", 2, 4.0026, [];
    "Li", 3, 6.94, [];
    "Be", 4, 9.0122, [];
    "B", 5, 10.81, [3];
    "C", 6, 12.011, [4];
    "N", 7, 14.007, [3];
    "O", 8, 15.999, [2];
    "F", 9, 18.998, [1];
    "Ne", 10, 20.180, [];
    "Na", 11, 22.990, [];
    "Mg", 12, 24.305, [];
    "Al", 13, 26.982, [];
    "Si", 14, 28.085, [];
    "P", 15, 30.974, [3, 5];
    "S", 16, 32.06, [2, 4, 6];
    "Cl", 17, 35.45, [1];
    "Ar", 18, 39.948, [];
    "K", 19, 39.098, [];
    "Ca", 20, 40.078, [];
    "Sc", 21, 44.956, [];
    "Ti", 22, 47.867, [];
    "V", 23, 50.942, [];
    "Cr", 24, 51.996, [];
    "Mn", 25, 54.938, [];
    "Fe", 26, 55.845, [];
    "Co", 27, 58.933, [];
    "Ni", 28, 58.693, [];
    "Cu", 29, 63.546, [];
    "Zn", 30, 65.38, [];
    "Ga", 31, 69.723, [];
    "Ge", 32, 72.630, [];
    "As", 33, 74.922, [];
    "Se", 34, 78.971, [];
    "Br", 35, 79.904, [1];
    "Kr", 36, 83.798, [];
    "Rb", 37, 85.468, [];
    "Sr", 38, 87.62, [];
    "Y", 39, 88.906, [];
    "Zr", 40, 91.224, [];
    "Nb", 41, 92.906, [];
    "Mo", 42, 95.95, [];
    "Tc", 43, 97.0, [];
    "Ru", 44, 101.07, [];
    "Rh", 45, 102.91, [];
    "Pd", 46, 106.42, [];
    "Ag", 47, 107.87, [];
    "Cd", 48, 112.41, [];
    "In", 49, 114.82, [];
    "Sn", 50, 118.71, [];
    "Sb", 51, 121.76, [];
    "Te", 52, 127.60, [];
    "I", 53, 126.90, [1];
    "Xe", 54, 131.29, [];
    "Cs", 55, 132.91, [];
    "Ba", 56, 137.33, [];
    "La", 57, 138.91, [];
    "Ce", 58, 140.12, [];
    "Pr", 59, 140.91, [];
    "Nd", 60, 144.24, [];
    "Pm", 61, 145.0, [];
    "Sm", 62, 150.36, [];
    "Eu", 63, 151.96, [];
    "Gd", 64, 157.25, [];
    "Tb", 65, 158.93, [];
    "Dy", 66, 162.50, [];
    "Ho", 67, 164.93, [];
    "Er", 68, 167.26, [];
    "Tm", 69, 168.93, [];
    "Yb", 70, 173.05, [];
    "Lu", 71, 174.97, [];
    "Hf", 72, 178.49, [];
    "Ta", 73, 180.95, [];
    "W", 74, 183.84, [];
    "Re", 75, 186.21, [];
    "Os", 76, 190.23, [];
    "Ir", 77, 192.22, [];
    "Pt", 78, 195.08, [];
    "Au", 79, 196.97, [];
    "Hg", 80, 200.59, [];
    "Tl", 81, 204.38, [];
    "Pb", 82, 207.2, [];
    "Bi", 83, 208.98, [];
    "Po", 84, 209.0, [];
    "At", 85, 210.0, [];
    "Rn", 86, 222.0, [];
    "Fr", 87, 223.0, [];
    "Ra", 88, 226.0, [];
    "Ac", 89, 227.0, [];
    "Th", 90, 232.04, [];
    "Pa", 91, 231.04, [];
    "U", 92, 238.03, [];
    "Np", 93, 237.0, [];
    "Pu", 94, 244.0, [];
    "Am", 95, 243.0, [];
    "Cm", 96, 247.0, [];
    "Bk", 97, 247.0, [];
    "Cf", 98, 251.0, [];
    "Es", 99, 252.0, [];
    "Fm", 100, 257.0, [];
    "Md", 101, 258.0, [];
    "No", 102, 259.0, [];
    "Lr", 103, 266.0, [];
    "Rf", 104, 267.0, [];
    "Db", 105, 268.0, [];
    "Sg", 106, 269.0, [];
    "Bh", 107, 270.0, [];
    "Hs", 108, 277.0, [];
    "Mt", 109, 278.0, [];
    "Ds", 110, 281.0, [];
    "Rg", 111, 282.0, [];
    "Cn", 112, 285.0, [];
    "Nh", 113, 286.0, [];
    "Fl", 114, 289.0, [];
    "Mc", 115, 290.0, [];
    "Lv", 116, 293.0, [];
    "Ts", 117, 294.0, [];
    "Og", 118, 294.0, [];
];

pub fn by_symbol(symbol: &str) -> Option<&'static Element> {
    ELEMENTS.iter().find(|e| e.symbol == symbol)
}

pub fn by_atomic_number(z: u8) -> Option<&'static Element> {
    if z == 0 {
        return None;
    }
    ELEMENTS.get(usize::from(z) - 1)
}

/// Allowed valences for an element carrying `charge`, using the isoelectronic
/// neighbour (N+ behaves like C, O- like F, C- like N). `None` when no
/// valence table applies and the check must be skipped.
pub fn charged_valences(element: &Element, charge: i8) -> Option<&'static [u8]> {
    if element.valences.is_empty() {
        return None;
    }
    if charge == 0 {
        return Some(element.valences);
    }
    let shifted = i16::from(element.atomic_number) - i16::from(charge);
    let shifted = u8::try_from(shifted).ok()?;
    let neighbour = by_atomic_number(shifted)?;
    if neighbour.valences.is_empty() {
        // e.g. [F+] or [Cl-]: nothing sensible to check against
        return None;
    }
    Some(neighbour.valences)
}
