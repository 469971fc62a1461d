// Phone captures can run tens of megabytes; shrinking the longest
// side to 1600px cuts upload time without touching accuracy, since
// the server resizes to its own input size regardless.
export const MAX_UPLOAD_SIDE = 1600;
const JPEG_QUALITY = 0.92;

export function fitWithin(
  width: number,
  height: number,
  maxSide: number,
): { width: number; height: number } {
  if (width <= 0 || height <= 0) {
    throw new Error('image dimensions must be positive');
  }
  const longest = Math.max(width, height);
  if (longest <= maxSide) {
    return { width, height };
  }
  const scale = maxSide / longest;
  return {
    width: Math.max(1, Math.round(width * scale)),
    height: Math.max(1, Math.round(height * scale)),
  };
}

/**
 * Re-encode an oversized image at a reduced resolution. Returns the
 * original blob untouched when it is already small enough, when the
 * bytes do not decode, or when the environment lacks canvas support;
 * the upload size cap is enforced separately either way.
 */
export async function downscaleImage(image: Blob, maxSide: number = MAX_UPLOAD_SIDE): Promise<Blob> {
  if (typeof createImageBitmap !== 'function' || typeof document === 'undefined') {
    return image;
  }
  let bitmap: ImageBitmap;
  try {
    bitmap = await createImageBitmap(image);
  } catch {
    return image;
  }
  try {
    const target = fitWithin(bitmap.width, bitmap.height, maxSide);
    if (target.width === bitmap.width && target.height === bitmap.height) {
      return image;
    }
    const canvas = document.createElement('canvas');
    canvas.width = target.width;
    canvas.height = target.height;
    const ctx = canvas.getContext('2d');
    if (!ctx) {
      return image;
    }
    ctx.drawImage(bitmap, 0, 0, target.width, target.height);
    const blob = await new Promise<Blob | null>((resolve) => {
      canvas.toBlob(resolve, 'image/jpeg', JPEG_QUALITY);
    });
    return blob ?? image;
  } finally {
    bitmap.close();
  }
}
